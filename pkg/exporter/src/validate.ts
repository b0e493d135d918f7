import { readFileSync } from "fs";
import { SchemaViolation } from "./errors.js";
import type { LogLineRecord, PredictionRecord } from "./types.js";

// the consumer accepts probability vectors whose entries sum to 1 within
// this tolerance; we enforce the same bound before writing
const PROB_SUM_TOLERANCE = 1e-6;

function isInteger(value: unknown): value is number {
  return typeof value === "number" && Number.isInteger(value);
}

function isFiniteNumber(value: unknown): value is number {
  return typeof value === "number" && Number.isFinite(value);
}

function checkPrediction(
  pred: unknown,
  where: string,
  probsLength: number | undefined,
): number | undefined {
  if (typeof pred !== "object" || pred === null) {
    throw new SchemaViolation(`${where}: prediction must be an object`);
  }
  const p = pred as Partial<PredictionRecord>;
  const box = p.bbox;
  if (!Array.isArray(box) || box.length !== 4 || !box.every(isFiniteNumber)) {
    throw new SchemaViolation(`${where}: bbox must hold four finite numbers`);
  }
  if (box[2] < box[0] || box[3] < box[1]) {
    throw new SchemaViolation(`${where}: bbox corners are inverted`);
  }
  if (!isInteger(p.category_id)) {
    throw new SchemaViolation(`${where}: category_id must be an integer`);
  }
  if (!isFiniteNumber(p.score) || p.score < 0 || p.score > 1) {
    throw new SchemaViolation(`${where}: score must lie in [0, 1]`);
  }
  if (p.probs === undefined) {
    return probsLength;
  }
  if (!Array.isArray(p.probs) || p.probs.length === 0) {
    throw new SchemaViolation(`${where}: probs must be a non-empty array`);
  }
  let total = 0;
  for (const value of p.probs) {
    if (!isFiniteNumber(value) || value < 0 || value > 1) {
      throw new SchemaViolation(`${where}: probs entries must lie in [0, 1]`);
    }
    total += value;
  }
  if (Math.abs(total - 1) > PROB_SUM_TOLERANCE) {
    throw new SchemaViolation(`${where}: probs sum to ${total}, not 1`);
  }
  if (probsLength !== undefined && p.probs.length !== probsLength) {
    throw new SchemaViolation(
      `${where}: probs length ${p.probs.length} differs from ${probsLength} seen earlier`,
    );
  }
  return p.probs.length;
}

/**
 * Check one record against the consumer's log-line schema.
 *
 * `probsLength` carries the probability-vector length seen so far (the
 * consumer requires one consistent length per log); the returned value is
 * the length to carry forward. Throws SchemaViolation on any problem.
 */
export function checkLine(
  record: unknown,
  where: string,
  probsLength: number | undefined,
): number | undefined {
  if (typeof record !== "object" || record === null) {
    throw new SchemaViolation(`${where}: record must be an object`);
  }
  const line = record as Partial<LogLineRecord>;
  if (!isInteger(line.epoch) || line.epoch < 1) {
    throw new SchemaViolation(`${where}: epoch must be a positive integer`);
  }
  if (!isInteger(line.image_id)) {
    throw new SchemaViolation(`${where}: image_id must be an integer`);
  }
  if (!Array.isArray(line.predictions)) {
    throw new SchemaViolation(`${where}: predictions must be an array`);
  }
  if (line.loss !== undefined && !isFiniteNumber(line.loss)) {
    throw new SchemaViolation(`${where}: loss must be a finite number`);
  }
  let length = probsLength;
  for (const pred of line.predictions) {
    length = checkPrediction(pred, where, length);
  }
  return length;
}

export interface LogSummary {
  lines: number;
  images: number;
  lastEpoch: number;
}

/** Validate a whole log text: schema per line, no duplicate epoch-image
 * records, one consistent probs length. */
export function validateLogText(text: string): LogSummary {
  const seen = new Set<string>();
  const images = new Set<number>();
  let probsLength: number | undefined;
  let lastEpoch = 0;
  let lines = 0;
  const rows = text.split("\n");
  if (rows.length > 0 && rows[rows.length - 1] === "") {
    rows.pop(); // a trailing newline is fine; interior blank lines are not
  }
  for (const [index, raw] of rows.entries()) {
    const where = `line ${index + 1}`;
    if (raw === "") {
      throw new SchemaViolation(`${where}: blank line`);
    }
    let record: unknown;
    try {
      record = JSON.parse(raw);
    } catch (error) {
      throw new SchemaViolation(`${where}: ${(error as Error).message}`);
    }
    probsLength = checkLine(record, where, probsLength);
    const line = record as LogLineRecord;
    const key = `${line.epoch}:${line.image_id}`;
    if (seen.has(key)) {
      throw new SchemaViolation(
        `${where}: second record for epoch ${line.epoch}, image ${line.image_id}`,
      );
    }
    seen.add(key);
    images.add(line.image_id);
    if (line.epoch > lastEpoch) lastEpoch = line.epoch;
    lines += 1;
  }
  return { lines, images: images.size, lastEpoch };
}

export function validateLogFile(path: string): LogSummary {
  return validateLogText(readFileSync(path, "utf-8"));
}

import { appendFileSync } from "fs";
import { NonMonotonicEpoch, SchemaViolation } from "./errors.js";
import { checkLine } from "./validate.js";
import type {
  Detection,
  ImageResult,
  LogLineRecord,
  PredictionRecord,
} from "./types.js";

/**
 * What gets exported at each epoch end.
 *
 * Detections are assumed post-NMS (that is what detector inference APIs
 * return); the consumer's matching results depend on this, so run NMS
 * first if your head emits raw anchors.
 */
export interface ExportPolicy {
  /** Drop detections scoring below this. Default 0.05. */
  scoreThreshold?: number;
  /** Keep at most this many detections per image, best first. Default 100. */
  maxDetectionsPerImage?: number;
  /** Emit per-class probability vectors when detections carry them. Default false. */
  includeProbs?: boolean;
  /**
   * The 1-based training window [first, last]. When set, per-image losses
   * are attached only to the last epoch's records (the consumer's loss
   * baseline reads the final epoch); when unset, losses are attached
   * whenever the caller supplies them.
   */
  epochRange?: [number, number];
}

const DEFAULT_SCORE_THRESHOLD = 0.05;
const DEFAULT_MAX_DETECTIONS = 100;

/**
 * Appends per-epoch inference results to a prediction log, one JSON line
 * per image per epoch, in exactly the format the scoring tool parses.
 *
 * Single writer per file; serialize onEpochEnd calls yourself if the
 * training loop is concurrent. Every line is schema-checked before
 * anything is written, so a failed call leaves the file untouched.
 */
export class PredictionLogExporter {
  private readonly scoreThreshold: number;
  private readonly maxDetections: number;
  private readonly includeProbs: boolean;
  private readonly finalEpoch: number | undefined;
  private lastEpoch = 0;
  private probsLength: number | undefined;

  constructor(
    private readonly path: string,
    policy: ExportPolicy = {},
  ) {
    const threshold = policy.scoreThreshold ?? DEFAULT_SCORE_THRESHOLD;
    if (!(threshold >= 0 && threshold <= 1)) {
      throw new SchemaViolation(`score threshold ${threshold} outside [0, 1]`);
    }
    const maxDetections = policy.maxDetectionsPerImage ?? DEFAULT_MAX_DETECTIONS;
    if (!Number.isInteger(maxDetections) || maxDetections < 1) {
      throw new SchemaViolation(
        `max detections per image must be a positive integer, got ${maxDetections}`,
      );
    }
    if (policy.epochRange !== undefined) {
      const [first, last] = policy.epochRange;
      if (!Number.isInteger(first) || !Number.isInteger(last) || first < 1 || last < first) {
        throw new SchemaViolation(`epoch range ${first}..${last} is invalid`);
      }
    }
    this.scoreThreshold = threshold;
    this.maxDetections = maxDetections;
    this.includeProbs = policy.includeProbs ?? false;
    this.finalEpoch = policy.epochRange?.[1];
  }

  /**
   * Record one epoch of inference results. Returns the number of lines
   * appended (one per entry in `results`).
   */
  onEpochEnd(epoch: number, results: ImageResult[]): number {
    if (!Number.isInteger(epoch) || epoch < 1) {
      throw new NonMonotonicEpoch(`epochs are 1-based integers, got ${epoch}`);
    }
    if (epoch <= this.lastEpoch) {
      throw new NonMonotonicEpoch(
        `epoch ${epoch} after epoch ${this.lastEpoch}; epochs must strictly increase`,
      );
    }
    const seen = new Set<number>();
    const lines: string[] = [];
    let probsLength = this.probsLength;
    for (const result of results) {
      if (seen.has(result.imageId)) {
        throw new SchemaViolation(
          `epoch ${epoch}: image ${result.imageId} appears twice`,
        );
      }
      seen.add(result.imageId);
      const record: LogLineRecord = {
        epoch,
        image_id: result.imageId,
        predictions: this.selectPredictions(result.detections),
      };
      if (result.loss !== undefined) {
        if (this.finalEpoch === undefined || epoch === this.finalEpoch) {
          record.loss = result.loss;
        }
      }
      probsLength = checkLine(
        record,
        `epoch ${epoch}, image ${result.imageId}`,
        probsLength,
      );
      lines.push(JSON.stringify(record) + "\n");
    }
    appendFileSync(this.path, lines.join(""));
    this.probsLength = probsLength;
    this.lastEpoch = epoch;
    return lines.length;
  }

  private selectPredictions(detections: Detection[]): PredictionRecord[] {
    const kept = detections.filter((d) => d.score >= this.scoreThreshold);
    // stable sort: equal scores keep the detector's own order
    kept.sort((a, b) => b.score - a.score);
    return kept.slice(0, this.maxDetections).map((d) => {
      const record: PredictionRecord = {
        bbox: [d.bbox[0], d.bbox[1], d.bbox[2], d.bbox[3]],
        category_id: d.categoryId,
        score: d.score,
      };
      if (this.includeProbs && d.probs !== undefined) {
        record.probs = [...d.probs];
      }
      return record;
    });
  }
}

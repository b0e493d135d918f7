export { PredictionLogExporter } from "./exporter.js";
export type { ExportPolicy } from "./exporter.js";
export { validateLogFile, validateLogText } from "./validate.js";
export type { LogSummary } from "./validate.js";
export { ExporterError, NonMonotonicEpoch, SchemaViolation } from "./errors.js";
export type {
  Detection,
  ImageResult,
  LogLineRecord,
  PredictionRecord,
} from "./types.js";

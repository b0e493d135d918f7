/** Base for exporter errors; `code` mirrors the class name, matching the
 * error convention of the Python tool this package feeds. */
export class ExporterError extends Error {
  get code(): string {
    return this.constructor.name;
  }
}

/** Epoch-end calls must carry 1-based, strictly increasing epoch numbers. */
export class NonMonotonicEpoch extends ExporterError {}

/** A record would not survive the consumer's log parser. */
export class SchemaViolation extends ExporterError {}

#!/usr/bin/env node
import { ExporterError } from "./errors.js";
import { validateLogFile } from "./validate.js";

function usage(): void {
  process.stderr.write("usage: detprune-export-validate validate <log.jsonl>\n");
}

const args = process.argv.slice(2);
if (args.length !== 2 || args[0] !== "validate") {
  usage();
  process.exit(2);
}

try {
  const summary = validateLogFile(args[1]);
  process.stdout.write(
    `${summary.lines} lines, ${summary.images} images, last epoch ${summary.lastEpoch}\n`,
  );
} catch (err) {
  if (err instanceof ExporterError) {
    process.stderr.write(`ERROR ${err.code}: ${err.message}\n`);
  } else if (err instanceof Error && "code" in err) {
    // fs errors (ENOENT and friends)
    process.stderr.write(`ERROR IOError: ${err.message}\n`);
  } else {
    throw err;
  }
  process.exit(1);
}

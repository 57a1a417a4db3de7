#!/usr/bin/env node
/** Standalone command: `gradexport export <job.json>`. */

import { pathToFileURL } from "node:url";

import { exportGradients, loadJob } from "./exporter.js";

const USAGE = "usage: gradexport export <job.json>";

export function runCli(argv: string[]): number {
  if (argv.length !== 2 || argv[0] !== "export") {
    console.error(USAGE);
    return 2;
  }
  try {
    const summary = exportGradients(loadJob(argv[1]));
    console.log(JSON.stringify(summary));
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : String(err)}`);
    return 2;
  }
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(runCli(process.argv.slice(2)));
}

/**
 * Entry point. Backend selection:
 *
 *   --stub                              deterministic threshold backend (CI)
 *   --backend module:./my_segmenter.js  custom wrapper around a real model
 *
 * A custom module exports `segment(channels, h, w, box) -> Candidate[]`
 * (scored masks; the highest score wins) and may export `predict`. Model
 * checkpoint paths, devices etc. are the module's own concern; a module
 * that fails to load makes the bridge exit nonzero with a JSON error line
 * before any request is read.
 */

import { parseArgs } from "node:util";

import { Backend, loadModuleBackend, stubBackend } from "./backend.js";
import { serve } from "./server.js";

async function main(): Promise<number> {
  const { values } = parseArgs({
    options: {
      stub: { type: "boolean", default: false },
      backend: { type: "string" },
      "out-dir": { type: "string", default: "bridge_masks" },
    },
  });

  let backend: Backend;
  try {
    if (values.stub) {
      backend = stubBackend;
    } else if (values.backend && values.backend.startsWith("module:")) {
      backend = await loadModuleBackend(values.backend.slice("module:".length));
    } else {
      throw new Error("no backend selected: pass --stub or --backend module:<path>");
    }
  } catch (err) {
    process.stdout.write(
      JSON.stringify({ fatal: err instanceof Error ? err.message : String(err) }) + "\n",
    );
    return 1;
  }

  await serve({ backend, outDir: values["out-dir"] as string });
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    process.stdout.write(JSON.stringify({ fatal: String(err) }) + "\n");
    process.exit(1);
  },
);

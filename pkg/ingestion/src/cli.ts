#!/usr/bin/env node
import { convertFile } from "./convert";
import { fetchSource } from "./fetch";
import { fixturePath, getSpec, listSpecs } from "./specs";

const USAGE = `usage:
  ingest list
  ingest fetch <source> [--cache-dir <dir>] [--url <direct-jsonl-url>]
  ingest convert <source> [--input <jsonl>] [--output <raw.jsonl>]

convert reads the committed sample fixture unless --input names a fetched file.
The cache dir defaults to $INGEST_CACHE_DIR; hub tokens come from $INGEST_HUB_TOKEN.`;

function parseFlags(argv: string[], allowed: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const name = argv[i];
    if (!allowed.includes(name)) throw new Error(`unknown flag ${name}`);
    const value = argv[i + 1];
    if (value === undefined) throw new Error(`flag ${name} needs a value`);
    flags.set(name, value);
  }
  return flags;
}

async function main(argv: string[]): Promise<number> {
  const [verb, ...rest] = argv;

  if (verb === "--help" || verb === "-h") {
    console.log(USAGE);
    return 0;
  }
  if (!verb) {
    console.error(USAGE);
    return 1;
  }

  if (verb === "list") {
    for (const spec of listSpecs()) {
      console.log(`${spec.sourceName}\t${spec.split}\t${spec.hub}`);
    }
    return 0;
  }

  if (verb === "fetch") {
    const [source, ...flagArgs] = rest;
    if (!source) {
      console.error(USAGE);
      return 1;
    }
    const flags = parseFlags(flagArgs, ["--cache-dir", "--url"]);
    const spec = getSpec(source);
    const dest = await fetchSource(spec, {
      cacheDir: flags.get("--cache-dir"),
      url: flags.get("--url"),
    });
    console.log(dest);
    return 0;
  }

  if (verb === "convert") {
    const [source, ...flagArgs] = rest;
    if (!source) {
      console.error(USAGE);
      return 1;
    }
    const flags = parseFlags(flagArgs, ["--input", "--output"]);
    const spec = getSpec(source);
    const input = flags.get("--input") ?? fixturePath(spec);
    const output = flags.get("--output") ?? `${spec.sourceName}.raw.jsonl`;
    const count = convertFile(spec, input, output);
    console.log(`wrote ${count} records to ${output}`);
    return 0;
  }

  console.error(`unknown verb "${verb}"\n${USAGE}`);
  return 1;
}

main(process.argv.slice(2))
  .then((code) => {
    process.exitCode = code;
  })
  .catch((err) => {
    console.error(String(err instanceof Error ? err.message : err));
    process.exitCode = 2;
  });

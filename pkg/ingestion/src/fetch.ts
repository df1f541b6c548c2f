import { createHash } from "crypto";
import { existsSync, mkdirSync, readFileSync, rmSync, writeFileSync } from "fs";
import os from "os";
import path from "path";

import { SourceSpec } from "./specs";

export type Transport = (url: string, token?: string) => Promise<Uint8Array>;

export const httpTransport: Transport = async (url, token) => {
  const res = await fetch(
    url,
    token ? { headers: { authorization: `Bearer ${token}` } } : undefined,
  );
  if (!res.ok) throw new Error(`HTTP ${res.status} for ${url}`);
  return new Uint8Array(await res.arrayBuffer());
};

export function sha256(data: Uint8Array | string): string {
  return createHash("sha256").update(data).digest("hex");
}

export function defaultCacheDir(): string {
  return process.env.INGEST_CACHE_DIR ?? path.join(os.homedir(), ".cache", "embench-ingest");
}

export interface FetchOptions {
  cacheDir?: string;
  transport?: Transport;
  /** overrides the spec's url */
  url?: string;
}

/**
 * Downloads a spec's source file into the cache, verifying its checksum when
 * the spec publishes one. A cache hit that passes verification skips the
 * network entirely; an entry that fails it is re-downloaded.
 */
export async function fetchSource(spec: SourceSpec, opts: FetchOptions = {}): Promise<string> {
  const url = opts.url ?? spec.url;
  if (!url) {
    throw new Error(
      `spec "${spec.sourceName}" has no direct download url; export the hub dataset ` +
        `(${spec.hub}) to JSONL and pass --url or --input instead`,
    );
  }
  const cacheDir = opts.cacheDir ?? defaultCacheDir();
  const transport = opts.transport ?? httpTransport;
  const dest = path.join(cacheDir, `${spec.sourceName}.jsonl`);

  if (existsSync(dest)) {
    if (!spec.checksum || sha256(readFileSync(dest)) === spec.checksum) {
      return dest;
    }
    rmSync(dest); // corrupted entry
  }

  const token = process.env.INGEST_HUB_TOKEN || undefined;
  const data = await transport(url, token);
  if (spec.checksum) {
    const got = sha256(data);
    if (got !== spec.checksum) {
      throw new Error(`checksum mismatch for ${url}: expected ${spec.checksum}, got ${got}`);
    }
  }
  mkdirSync(cacheDir, { recursive: true });
  writeFileSync(dest, data);
  return dest;
}

export interface Row {
  lineNumber: number;
  value: unknown;
}

/** Parses JSONL text; blank lines are skipped, line numbers are 1-based. */
export function parseJsonl(text: string): Row[] {
  const rows: Row[] = [];
  const lines = text.split(/\r?\n/);
  for (let i = 0; i < lines.length; i++) {
    if (!lines[i].trim()) continue;
    let value: unknown;
    try {
      value = JSON.parse(lines[i]);
    } catch (err) {
      throw new Error(`line ${i + 1}: invalid JSON (${(err as Error).message})`);
    }
    rows.push({ lineNumber: i + 1, value });
  }
  return rows;
}

export function toJsonl(records: Record<string, string>[]): string {
  return records.map((r) => JSON.stringify(r)).join("\n") + (records.length ? "\n" : "");
}

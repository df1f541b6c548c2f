import { readFileSync, writeFileSync } from "fs";

import { parseJsonl, toJsonl, Row } from "./jsonl";
import { FieldRule, SourceSpec } from "./specs";

/** Raised when a source row does not match the spec's published schema. */
export class SchemaError extends Error {}

function resolvePath(row: unknown, dotted: string): unknown {
  let cur: unknown = row;
  for (const part of dotted.split(".")) {
    if (cur === null || typeof cur !== "object") return undefined;
    cur = (cur as Record<string, unknown>)[part];
  }
  return cur;
}

function resolveField(row: unknown, rule: FieldRule, line: number, outField: string): unknown {
  if (typeof rule === "string") {
    const value = resolvePath(row, rule);
    if (value === undefined) {
      throw new SchemaError(`line ${line}: missing field "${rule}" (wanted for "${outField}")`);
    }
    return value;
  }
  const list = resolvePath(row, rule.list);
  if (list === undefined) {
    throw new SchemaError(`line ${line}: missing field "${rule.list}" (wanted for "${outField}")`);
  }
  if (!Array.isArray(list)) {
    throw new SchemaError(`line ${line}: field "${rule.list}" is not an array`);
  }
  const rawIndex = resolvePath(row, rule.indexField);
  if (rawIndex === undefined) {
    throw new SchemaError(`line ${line}: missing field "${rule.indexField}" (wanted for "${outField}")`);
  }
  const index = Number(rawIndex);
  if (!Number.isInteger(index) || index < 0 || index >= list.length) {
    throw new SchemaError(
      `line ${line}: "${rule.indexField}" = ${JSON.stringify(rawIndex)} does not index "${rule.list}" (${list.length} entries)`,
    );
  }
  return list[index];
}

/**
 * Converts parsed source rows to raw records under a spec's extraction rules.
 * Order-preserving: output i derives from the i-th row that survives the
 * spec's filter. Any schema mismatch throws a SchemaError naming the field.
 */
export function convertRows(spec: SourceSpec, rows: Row[]): Record<string, string>[] {
  const records: Record<string, string>[] = [];
  for (const { lineNumber, value } of rows) {
    if (value === null || typeof value !== "object" || Array.isArray(value)) {
      throw new SchemaError(`line ${lineNumber}: source row must be a JSON object`);
    }
    if (spec.filter && String(resolvePath(value, spec.filter.field)) !== spec.filter.equals) {
      continue;
    }
    const record: Record<string, string> = {};
    for (const [outField, rule] of Object.entries(spec.extract.fields)) {
      let raw = resolveField(value, rule, lineNumber, outField);
      const map = spec.extract.valueMaps?.[outField];
      if (map) {
        const mapped = map[String(raw)];
        if (mapped === undefined) {
          throw new SchemaError(
            `line ${lineNumber}: unmapped value ${JSON.stringify(raw)} for field "${outField}"`,
          );
        }
        raw = mapped;
      }
      if (typeof raw !== "string") {
        throw new SchemaError(`line ${lineNumber}: field "${outField}" is not a string`);
      }
      record[outField] = raw;
    }
    records.push(record);
  }
  return records;
}

/** Converts a JSONL source file on disk; returns the record count. */
export function convertFile(spec: SourceSpec, inPath: string, outPath: string): number {
  const rows = parseJsonl(readFileSync(inPath, "utf-8"));
  const records = convertRows(spec, rows);
  writeFileSync(outPath, toJsonl(records));
  return records.length;
}

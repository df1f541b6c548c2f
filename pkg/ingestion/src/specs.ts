import path from "path";

/** Picks one element of a string array using an integer index read from another field. */
export interface ListPickRule {
  list: string;
  indexField: string;
}

/** Either a dotted path into the source row, or a list-pick rule. */
export type FieldRule = string | ListPickRule;

export interface ExtractRules {
  /** output field name -> where it comes from in the source row */
  fields: Record<string, FieldRule>;
  /** optional per-output-field rewrite of raw values (keys are String(rawValue)) */
  valueMaps?: Record<string, Record<string, string>>;
}

export interface SourceSpec {
  sourceName: string;
  /** dataset home on its hub; informational unless it is a direct file link */
  hub: string;
  /** direct download link for a JSONL export, when one is published */
  url?: string;
  split: string;
  /** sha256 of the file at `url`, verified after download when set */
  checksum?: string;
  /** repo-relative path of the committed <=100-record sample in the upstream schema */
  sampleFixture: string;
  licenseNote: string;
  /** keep only rows where String(row[field]) === equals (e.g. a language tag) */
  filter?: { field: string; equals: string };
  extract: ExtractRules;
}

// Specs consume JSONL exports of the named datasets (the shape produced by a
// hub JSONL export or datasets' to_json); sample fixtures are committed in
// that exact shape so conversion runs offline.
const SPECS: SourceSpec[] = [
  {
    sourceName: "esnli",
    hub: "https://huggingface.co/datasets/esnli",
    split: "test",
    sampleFixture: "fixtures/esnli.sample.jsonl",
    licenseNote: "MIT (explanations); underlying SNLI text CC BY-SA 4.0",
    extract: {
      fields: {
        premise: "premise",
        hypothesis: "hypothesis",
        label: "label",
      },
      valueMaps: {
        label: { "0": "entailment", "1": "neutral", "2": "contradictory" },
      },
    },
  },
  {
    sourceName: "beavertails_safety",
    hub: "https://huggingface.co/datasets/PKU-Alignment/BeaverTails",
    split: "30k_test",
    sampleFixture: "fixtures/beavertails_safety.sample.jsonl",
    licenseNote: "CC BY-NC 4.0",
    extract: {
      fields: {
        prompt: "prompt",
        response: "response",
        label: "is_safe",
      },
      valueMaps: {
        label: { true: "safe", false: "unsafe" },
      },
    },
  },
  {
    sourceName: "shp",
    hub: "https://huggingface.co/datasets/stanfordnlp/SHP",
    split: "test",
    sampleFixture: "fixtures/shp.sample.jsonl",
    licenseNote: "Reddit-sourced content; see dataset card for terms",
    extract: {
      fields: {
        context: "history",
        responseA: "human_ref_A",
        responseB: "human_ref_B",
        preference: "labels",
      },
      valueMaps: {
        // upstream labels: 1 means human_ref_A was preferred
        preference: { "1": "responseA", "0": "responseB" },
      },
    },
  },
  {
    sourceName: "rarb_hellaswag",
    hub: "https://huggingface.co/datasets/Rowan/hellaswag",
    url: "https://github.com/rowanz/hellaswag/raw/master/data/hellaswag_val.jsonl",
    split: "validation",
    sampleFixture: "fixtures/rarb_hellaswag.sample.jsonl",
    licenseNote: "MIT",
    extract: {
      fields: {
        question: "ctx",
        answer: { list: "endings", indexField: "label" },
      },
    },
  },
  {
    sourceName: "dipper",
    hub: "https://huggingface.co/datasets/kalpeshk2011/dipper-paraphrases",
    split: "test",
    sampleFixture: "fixtures/dipper.sample.jsonl",
    licenseNote: "Apache-2.0",
    extract: {
      fields: {
        document: "input_text",
        paraphrase: "output_text",
      },
    },
  },
  {
    sourceName: "europarl_doc",
    hub: "https://huggingface.co/datasets/Helsinki-NLP/europarl (de-en)",
    split: "train",
    sampleFixture: "fixtures/europarl_doc.sample.jsonl",
    licenseNote: "Europarl corpus; free for research use",
    extract: {
      fields: {
        source: "translation.en",
        target: "translation.de",
      },
    },
  },
];

export function listSpecs(): SourceSpec[] {
  return SPECS.slice();
}

export function getSpec(sourceName: string): SourceSpec {
  const spec = SPECS.find((s) => s.sourceName === sourceName);
  if (!spec) {
    const known = SPECS.map((s) => s.sourceName).join(", ");
    throw new Error(`unknown source "${sourceName}" (known: ${known})`);
  }
  return spec;
}

/** Absolute path of a spec's committed sample fixture. */
export function fixturePath(spec: SourceSpec): string {
  return path.resolve(__dirname, "..", spec.sampleFixture);
}

// Wire contract for the story engine's control API. Every payload carries
// schema_version, and unknown versions are rejected at the parse boundary
// so the rest of the UI can trust the shapes.

import { z } from "zod";

export const SCHEMA_VERSION = 1;

export const OutlineNodeSchema = z.object({
  id: z.string(),
  depth: z.number().int(),
  event_text: z.string(),
  setting: z.string().nullable(),
  character_names: z.array(z.string()).nullable(),
  children: z.array(z.string()),
  parent: z.string().nullable(),
  creation_index: z.number().int(),
  origin: z.string(),
  leaf_reason: z.string().nullable(),
});
export type OutlineNode = z.infer<typeof OutlineNodeSchema>;

export const PassageSchema = z.object({
  leaf_id: z.string(),
  text: z.string(),
  substeps_used: z.number().int(),
  final_scores: z.array(z.array(z.number())),
  skipped: z.boolean(),
});
export type Passage = z.infer<typeof PassageSchema>;

export const RunStateSchema = z.object({
  schema_version: z.literal(SCHEMA_VERSION),
  premise: z.object({ text: z.string() }),
  setting: z.string(),
  inventory: z.array(z.unknown()),
  tree: z.object({
    nodes: z.array(OutlineNodeSchema),
    root: z.string(),
    next_creation_index: z.number().int(),
  }),
  passages: z.array(PassageSchema),
  stage: z.string(),
  config: z.record(z.string(), z.unknown()),
});
export type RunState = z.infer<typeof RunStateSchema>;

export const CreateRunResponseSchema = z.object({
  schema_version: z.literal(SCHEMA_VERSION),
  run_id: z.string(),
  stage: z.string(),
});

export const GetRunResponseSchema = z.object({
  schema_version: z.literal(SCHEMA_VERSION),
  run_id: z.string(),
  state: RunStateSchema,
});

export const EditAckSchema = z.object({
  schema_version: z.literal(SCHEMA_VERSION),
  stage: z.string(),
  applied: z.number().int(),
  warnings: z.array(z.string()),
});
export type EditAck = z.infer<typeof EditAckSchema>;

export const AdvanceResponseSchema = z.object({
  schema_version: z.literal(SCHEMA_VERSION),
  stage: z.string(),
});

// Progress events: outline-stage transitions carry nulls, drafting carries
// the active leaf, substep, and the text delta for that substep.
export const ProgressEventSchema = z.object({
  schema_version: z.literal(SCHEMA_VERSION),
  stage: z.string(),
  leaf_id: z.string().nullable(),
  substep: z.number().int().nullable(),
  text_delta: z.string().nullable(),
});
export type ProgressEvent = z.infer<typeof ProgressEventSchema>;

export type EditOp = "ReplaceEvent" | "Delete" | "InsertChildAfter";

export interface OutlineEdit {
  node_id: string;
  op: EditOp;
  event_text: string;
}

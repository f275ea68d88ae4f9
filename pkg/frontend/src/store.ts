// View-model for one interactive run. The server-acknowledged state is the
// only source of truth for the outline; local edits live in a queue beside
// it and are rendered as marked overlays until the server accepts the
// batch. Reloading from GET /runs/{id} therefore always reconstructs the
// same view.

import { ApiError, ControlApi } from "./api";
import { consumeEventStream, type EventStreamResult } from "./sse";
import type {
  EditOp,
  OutlineEdit,
  OutlineNode,
  ProgressEvent,
  RunState,
} from "./types";

export type PendingKind = "none" | "replace" | "delete" | "insert";

export interface PendingEdit {
  /** Local-only handle, never sent to the server. */
  localId: string;
  op: EditOp;
  nodeId: string;
  eventText: string;
}

export interface UiTreeItem {
  id: string;
  depth: number;
  /** "1." / "a." / "i." style label within the siblings. */
  label: string;
  eventText: string;
  origin: string;
  pending: PendingKind;
}

export interface StoryPassageView {
  leafId: string;
  text: string;
  /** True for skip-flagged leaves, rendered as a marked gap. */
  gap: boolean;
  /** True while the passage is still streaming in. */
  live: boolean;
}

export interface StorySection {
  topItemId: string;
  heading: string;
  passages: StoryPassageView[];
}

export interface UiRunView {
  runId: string;
  stage: string;
  tree: UiTreeItem[];
  pendingCount: number;
  violations: string[];
  warnings: string[];
  /** Advisory edit-session countdown; display only, never enforced. */
  editTimerSeconds: number;
  activeLeafId: string | null;
  activeSubstep: number | null;
  /** Control strength implied by the active substep, for display. */
  controlStrength: number | null;
  story: StorySection[];
}

export const EDIT_SESSION_SECONDS = 300;

// Display copy of the server's default control-strength ramp; the UI only
// shows it next to the substep counter.
const STRENGTH_RAMP = [0, 3, 6, 9, 10, 10, 10, 10];

export function strengthFor(substep: number | null): number | null {
  if (substep === null || substep < 0) {
    return null;
  }
  return STRENGTH_RAMP[Math.min(substep, STRENGTH_RAMP.length - 1)] ?? null;
}

function romanNumeral(n: number): string {
  const table: Array<[number, string]> = [
    [10, "x"], [9, "ix"], [5, "v"], [4, "iv"], [1, "i"],
  ];
  let remainder = n;
  let out = "";
  for (const [value, glyph] of table) {
    while (remainder >= value) {
      out += glyph;
      remainder -= value;
    }
  }
  return out;
}

function letterLabel(n: number): string {
  // a..z, then aa, ab, ... (outlines never get that wide in practice)
  let remainder = n;
  let out = "";
  while (remainder > 0) {
    remainder -= 1;
    out = String.fromCharCode(97 + (remainder % 26)) + out;
    remainder = Math.floor(remainder / 26);
  }
  return out;
}

export function itemLabel(depth: number, ordinal: number): string {
  if (depth <= 1) {
    return `${ordinal}.`;
  }
  if (depth === 2) {
    return `${letterLabel(ordinal)}.`;
  }
  return `${romanNumeral(ordinal)}.`;
}

let localCounter = 0;

function nextLocalId(): string {
  localCounter += 1;
  return `local-${localCounter}`;
}

export class PlanStudio {
  runId: string | null = null;
  stage = "";
  acked: RunState | null = null;
  pending: PendingEdit[] = [];
  violations: string[] = [];
  warnings: string[] = [];
  editTimerSeconds = EDIT_SESSION_SECONDS;

  activeLeafId: string | null = null;
  activeSubstep: number | null = null;
  private drafts = new Map<string, string>();

  constructor(private readonly api: ControlApi) {}

  // -- lifecycle -------------------------------------------------------

  async createRun(
    premise: string | null,
    config: Record<string, unknown> = {},
  ): Promise<void> {
    const created = await this.api.createRun(premise, config);
    this.runId = created.runId;
    await this.reload();
  }

  async open(runId: string): Promise<void> {
    this.runId = runId;
    await this.reload();
  }

  /** Refetch the acknowledged state; the whole view derives from it. */
  async reload(): Promise<void> {
    if (this.runId === null) {
      throw new Error("no run loaded");
    }
    this.acked = await this.api.getRun(this.runId);
    this.stage = this.acked.stage;
  }

  // -- local edit queue --------------------------------------------------

  queueReplace(nodeId: string, eventText: string): string {
    return this.queue("ReplaceEvent", nodeId, eventText);
  }

  queueDelete(nodeId: string): string {
    return this.queue("Delete", nodeId, "");
  }

  /** Insert a sibling after nodeId; shown as a phantom row until acked. */
  queueInsertAfter(nodeId: string, eventText: string): string {
    return this.queue("InsertChildAfter", nodeId, eventText);
  }

  private queue(op: EditOp, nodeId: string, eventText: string): string {
    const localId = nextLocalId();
    this.pending.push({ localId, op, nodeId, eventText });
    return localId;
  }

  discardPending(localId?: string): void {
    this.pending = localId
      ? this.pending.filter((edit) => edit.localId !== localId)
      : [];
  }

  // -- server round trips --------------------------------------------------

  /**
   * Post all queued edits as one atomic batch. On acceptance the queue
   * empties and the view reloads; on rejection the queue stays local and
   * the server's complaint lands in `violations`.
   */
  async submit(): Promise<boolean> {
    if (this.runId === null) {
      throw new Error("no run loaded");
    }
    if (this.pending.length === 0) {
      return true;
    }
    const batch: OutlineEdit[] = this.pending.map((edit) => ({
      node_id: edit.nodeId,
      op: edit.op,
      event_text: edit.eventText,
    }));
    try {
      const ack = await this.api.submitEdits(this.runId, batch);
      this.pending = [];
      this.violations = [];
      this.warnings = ack.warnings;
      await this.reload();
      return true;
    } catch (error) {
      if (error instanceof ApiError && error.status === 400) {
        this.violations = [error.detail];
        return false;
      }
      throw error;
    }
  }

  /** Ask the server for the next stage, then resync. */
  async advance(): Promise<string> {
    if (this.runId === null) {
      throw new Error("no run loaded");
    }
    try {
      const stage = await this.api.advance(this.runId);
      this.stage = stage;
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.violations = [error.detail];
        throw error;
      }
      throw error;
    }
    await this.reload();
    return this.stage;
  }

  // -- draft stream ----------------------------------------------------------

  /** Concatenated deltas received so far for one leaf. */
  draftFor(leafId: string): string {
    return this.drafts.get(leafId) ?? "";
  }

  applyEvent(event: ProgressEvent): void {
    this.stage = event.stage;
    if (event.leaf_id !== null) {
      this.activeLeafId = event.leaf_id;
      this.activeSubstep = event.substep;
      if (event.text_delta !== null) {
        const sofar = this.drafts.get(event.leaf_id) ?? "";
        this.drafts.set(event.leaf_id, sofar + event.text_delta);
      }
    }
  }

  /**
   * Follow the progress stream until the run reports Done, reconnecting
   * from the last seen event id if the connection drops.
   */
  async watchDraft(options?: {
    retryDelayMs?: number;
    maxRetries?: number;
  }): Promise<EventStreamResult> {
    if (this.runId === null) {
      throw new Error("no run loaded");
    }
    const result = await consumeEventStream(this.api.eventsUrl(this.runId), {
      fetchImpl: this.api.fetcher(),
      retryDelayMs: options?.retryDelayMs,
      maxRetries: options?.maxRetries,
      onEvent: (event) => this.applyEvent(event),
      isTerminal: (event) => event.stage === "Done",
    });
    await this.reload();
    return result;
  }

  // -- derived view -------------------------------------------------------

  view(): UiRunView {
    return {
      runId: this.runId ?? "",
      stage: this.stage,
      tree: this.treeItems(),
      pendingCount: this.pending.length,
      violations: [...this.violations],
      warnings: [...this.warnings],
      editTimerSeconds: this.editTimerSeconds,
      activeLeafId: this.activeLeafId,
      activeSubstep: this.activeSubstep,
      controlStrength: strengthFor(this.activeSubstep),
      story: this.storySections(),
    };
  }

  private nodeById(): Map<string, OutlineNode> {
    const nodes = new Map<string, OutlineNode>();
    for (const node of this.acked?.tree.nodes ?? []) {
      nodes.set(node.id, node);
    }
    return nodes;
  }

  private treeItems(): UiTreeItem[] {
    if (this.acked === null) {
      return [];
    }
    const nodes = this.nodeById();
    const root = nodes.get(this.acked.tree.root);
    if (root === undefined) {
      return [];
    }
    const replaceFor = new Map<string, PendingEdit>();
    const deleteFor = new Set<string>();
    const insertsAfter = new Map<string, PendingEdit[]>();
    for (const edit of this.pending) {
      if (edit.op === "ReplaceEvent") {
        replaceFor.set(edit.nodeId, edit);
      } else if (edit.op === "Delete") {
        deleteFor.add(edit.nodeId);
      } else {
        const queue = insertsAfter.get(edit.nodeId) ?? [];
        queue.push(edit);
        insertsAfter.set(edit.nodeId, queue);
      }
    }

    const items: UiTreeItem[] = [];
    const walk = (nodeId: string, depth: number, ordinal: number): void => {
      const node = nodes.get(nodeId);
      if (node === undefined) {
        return;
      }
      const markedDelete = deleteFor.has(nodeId);
      const replace = replaceFor.get(nodeId);
      items.push({
        id: nodeId,
        depth,
        label: itemLabel(depth, ordinal),
        eventText: replace?.eventText ?? node.event_text,
        origin: node.origin,
        pending: markedDelete ? "delete" : replace ? "replace" : "none",
      });
      if (!markedDelete) {
        // descendants of a pending delete disappear optimistically
        let childOrdinal = 0;
        for (const childId of node.children) {
          childOrdinal += 1;
          walk(childId, depth + 1, childOrdinal);
          for (const insert of insertsAfter.get(childId) ?? []) {
            childOrdinal += 1;
            items.push({
              id: insert.localId,
              depth: depth + 1,
              label: itemLabel(depth + 1, childOrdinal),
              eventText: insert.eventText,
              origin: "human",
              pending: "insert",
            });
          }
        }
      }
    };
    let ordinal = 0;
    for (const childId of root.children) {
      ordinal += 1;
      walk(childId, 1, ordinal);
      for (const insert of insertsAfter.get(childId) ?? []) {
        ordinal += 1;
        items.push({
          id: insert.localId,
          depth: 1,
          label: itemLabel(1, ordinal),
          eventText: insert.eventText,
          origin: "human",
          pending: "insert",
        });
      }
    }
    return items;
  }

  /** Story text grouped under the top-level outline item of each leaf. */
  private storySections(): StorySection[] {
    if (this.acked === null) {
      return [];
    }
    const nodes = this.nodeById();
    const root = nodes.get(this.acked.tree.root);
    if (root === undefined) {
      return [];
    }
    const topAncestor = (leafId: string): string | null => {
      let current = nodes.get(leafId);
      while (current !== undefined && current.parent !== null) {
        if (current.parent === root.id) {
          return current.id;
        }
        current = nodes.get(current.parent);
      }
      return null;
    };

    const passagesByTop = new Map<string, StoryPassageView[]>();
    const seen = new Set<string>();
    for (const passage of this.acked.passages) {
      const top = topAncestor(passage.leaf_id);
      if (top === null) {
        continue;
      }
      seen.add(passage.leaf_id);
      const live = this.drafts.has(passage.leaf_id) && passage.text === "";
      const entry: StoryPassageView = {
        leafId: passage.leaf_id,
        text: live ? this.drafts.get(passage.leaf_id) ?? "" : passage.text,
        gap: passage.skipped,
        live,
      };
      const list = passagesByTop.get(top) ?? [];
      list.push(entry);
      passagesByTop.set(top, list);
    }
    // leaves still streaming have no passage row yet
    for (const [leafId, text] of this.drafts) {
      if (seen.has(leafId)) {
        continue;
      }
      const top = topAncestor(leafId);
      if (top === null) {
        continue;
      }
      const list = passagesByTop.get(top) ?? [];
      list.push({ leafId, text, gap: false, live: true });
      passagesByTop.set(top, list);
    }

    const sections: StorySection[] = [];
    let ordinal = 0;
    for (const topId of root.children) {
      ordinal += 1;
      const node = nodes.get(topId);
      if (node === undefined) {
        continue;
      }
      sections.push({
        topItemId: topId,
        heading: `${itemLabel(1, ordinal)} ${node.event_text}`,
        passages: passagesByTop.get(topId) ?? [],
      });
    }
    return sections;
  }
}

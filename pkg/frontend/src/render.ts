// Plain-text rendering of the run view. The outline mirrors the engine's
// own numbering (arabic, then letters at 8 spaces, then roman at 16), so
// what the user edits looks like what the model was prompted with. A DOM
// layer can bind these strings one row per element; nothing here touches
// the document.

import type { StorySection, UiRunView, UiTreeItem } from "./store";

const INDENT_WIDTH = 8;

const PENDING_MARK: Record<UiTreeItem["pending"], string> = {
  none: "",
  replace: " [unsaved edit]",
  delete: " [marked for deletion]",
  insert: " [new, unsaved]",
};

export function renderTree(items: UiTreeItem[]): string {
  return items
    .map((item) => {
      const pad = " ".repeat(INDENT_WIDTH * (item.depth - 1));
      return `${pad}${item.label} ${item.eventText}${PENDING_MARK[item.pending]}`;
    })
    .join("\n");
}

export function renderStory(sections: StorySection[]): string {
  const blocks: string[] = [];
  for (const section of sections) {
    const lines = [section.heading];
    for (const passage of section.passages) {
      if (passage.gap) {
        lines.push(`  [${passage.leafId}] (passage skipped)`);
      } else {
        const live = passage.live ? " …" : "";
        lines.push(`  [${passage.leafId}] ${passage.text}${live}`);
      }
    }
    blocks.push(lines.join("\n"));
  }
  return blocks.join("\n\n");
}

export function formatTimer(totalSeconds: number): string {
  const clamped = Math.max(0, Math.floor(totalSeconds));
  const minutes = Math.floor(clamped / 60);
  const seconds = clamped % 60;
  return `${minutes}:${String(seconds).padStart(2, "0")}`;
}

export function renderView(view: UiRunView): string {
  const lines = [
    `run ${view.runId} — stage ${view.stage}`,
    `edit timer ${formatTimer(view.editTimerSeconds)} (advisory)`,
  ];
  if (view.pendingCount > 0) {
    lines.push(`${view.pendingCount} unsent edit(s)`);
  }
  for (const violation of view.violations) {
    lines.push(`rejected: ${violation}`);
  }
  for (const warning of view.warnings) {
    lines.push(`warning: ${warning}`);
  }
  if (view.activeLeafId !== null) {
    const strength =
      view.controlStrength === null ? "" : `, strength ${view.controlStrength}`;
    lines.push(
      `drafting ${view.activeLeafId} (substep ${view.activeSubstep}${strength})`,
    );
  }
  lines.push("", renderTree(view.tree));
  const story = renderStory(view.story);
  if (story !== "") {
    lines.push("", story);
  }
  return lines.join("\n");
}

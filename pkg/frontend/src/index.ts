export { ApiError, ControlApi, type FetchLike } from "./api";
export {
  formatTimer,
  renderStory,
  renderTree,
  renderView,
} from "./render";
export {
  consumeEventStream,
  SseParser,
  type EventStreamOptions,
  type EventStreamResult,
  type SseFrame,
} from "./sse";
export {
  EDIT_SESSION_SECONDS,
  itemLabel,
  PlanStudio,
  strengthFor,
  type PendingEdit,
  type StorySection,
  type StoryPassageView,
  type UiRunView,
  type UiTreeItem,
} from "./store";
export {
  SCHEMA_VERSION,
  type EditAck,
  type EditOp,
  type OutlineEdit,
  type OutlineNode,
  type Passage,
  type ProgressEvent,
  type RunState,
} from "./types";

export { ChatView } from "./chat.js";
export type { Bubble, ConnectionStatus } from "./chat.js";
export { FilterView } from "./filter.js";
export type { Clock } from "./filter.js";
export { HttpTransport, HttpError } from "./transport.js";
export type { Transport } from "./transport.js";
export type * from "./types.js";

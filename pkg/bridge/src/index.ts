export { Bridge, VocabMismatchError, argmaxAllowed } from "./bridge.js";
export type { BridgeConfig, GenerationResult } from "./bridge.js";
export { SidecarClient } from "./client.js";
export { SidecarRemoteError } from "./protocol.js";
export type {
  AdvanceResponse,
  InitParams,
  InitResponse,
  ResponseFrame,
  Space,
  StepResponse,
} from "./protocol.js";
export { TableStubModel, ZeroStubModel } from "./stub.js";
export type { Branch, LogitTables, ModelHandle } from "./stub.js";
export { StdioTransport, TcpTransport } from "./transport.js";
export type { Transport } from "./transport.js";
export {
  PATH_DELIMITER,
  answerFromPath,
  buildVocabText,
  decodeTokens,
  parseVocabText,
} from "./vocab.js";
export type { Vocab } from "./vocab.js";

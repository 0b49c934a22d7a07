/** Layer color semantics. Saved clouds are always green and the live cloud
 * is always red, in every state; nothing in the UI may reassign these. */

export const LAYER_COLORS = Object.freeze({
  saved: "#2ecc71",
  live: "#e74c3c",
  glyph: "#8899aa",
  technician: "#f1c40f",
} as const);

export type LayerName = keyof typeof LAYER_COLORS;

/** Command console grammar.
 *
 *   save "Position 1"        -> save_view {name}
 *   show "Position 1"        -> show_view {name}
 *   hide                     -> hide_view
 *   live                     -> toggle_live
 *   neutral | reset          -> reset_neutral
 *   set <dof> <value>        -> set_dofs {dof: value}
 *   adjust <dof> <delta>     -> adjust_dof {name, delta}
 *   xray <view> [purpose]    -> acquire_xray {view, purpose}
 *   align ["name"]           -> request_alignment {view?}
 *
 * Names may be double-quoted (required when they contain spaces).
 */

import { DOF_NAMES, type DofName, type Verb } from "./protocol.js";

export interface ParsedCommand {
  verb: Verb;
  args: Record<string, unknown>;
}

export interface ParseFailure {
  error: string;
}

export type ParseResult = ParsedCommand | ParseFailure;

export function isParseFailure(r: ParseResult): r is ParseFailure {
  return "error" in r;
}

function tokenize(text: string): string[] | null {
  const quoteCount = (text.match(/"/g) ?? []).length;
  if (quoteCount % 2 !== 0) return null; // unterminated quote
  const tokens: string[] = [];
  const re = /"([^"]*)"|(\S+)/g;
  let m: RegExpExecArray | null;
  while ((m = re.exec(text)) !== null) {
    tokens.push(m[1] !== undefined ? m[1] : m[2]);
  }
  return tokens;
}

function restAsName(text: string, keyword: string): string {
  // Everything after the keyword, unquoted if quoted.
  const rest = text.trim().slice(keyword.length).trim();
  const quoted = rest.match(/^"([^"]*)"$/);
  return quoted ? quoted[1] : rest;
}

export function parseConsoleInput(text: string): ParseResult {
  const trimmed = text.trim();
  if (!trimmed) return { error: "empty command" };
  const tokens = tokenize(trimmed);
  if (tokens === null) return { error: "unterminated quote" };
  const keyword = tokens[0].toLowerCase();

  switch (keyword) {
    case "save":
    case "show": {
      const name = restAsName(trimmed, tokens[0]);
      if (!name) return { error: `${keyword} needs a view name` };
      return {
        verb: keyword === "save" ? "save_view" : "show_view",
        args: { name },
      };
    }
    case "hide":
      return { verb: "hide_view", args: {} };
    case "live":
      return { verb: "toggle_live", args: {} };
    case "neutral":
    case "reset":
      return { verb: "reset_neutral", args: {} };
    case "set":
    case "adjust": {
      if (tokens.length !== 3) return { error: `usage: ${keyword} <dof> <number>` };
      const dof = tokens[1] as DofName;
      if (!DOF_NAMES.includes(dof)) return { error: `unknown DOF '${tokens[1]}'` };
      const value = Number(tokens[2]);
      if (!Number.isFinite(value)) return { error: `'${tokens[2]}' is not a number` };
      if (keyword === "set") return { verb: "set_dofs", args: { [dof]: value } };
      return { verb: "adjust_dof", args: { name: dof, delta: value } };
    }
    case "xray": {
      if (tokens.length < 2) return { error: "usage: xray <view> [purpose]" };
      const args: Record<string, unknown> = { view: tokens[1] };
      if (tokens.length > 2) args["purpose"] = tokens[2];
      return { verb: "acquire_xray", args };
    }
    case "align": {
      const args: Record<string, unknown> = {};
      if (tokens.length > 1) args["view"] = restAsName(trimmed, tokens[0]);
      return { verb: "request_alignment", args };
    }
    default:
      return { error: `unknown command '${tokens[0]}'` };
  }
}

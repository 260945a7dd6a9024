// Live board state, rebuilt purely from the server event feed. The console
// keeps no authoritative state: replaying all events from id 0 reconstructs
// an identical board.

import type { RegistryEvent } from "./api.js";

export type GateState = "open" | "closed";

export interface CheckpostCard {
  checkpostId: string;
  gate: GateState;
  lastDetection: { tag: string; verdict: string; echoOk: boolean; at: number } | null;
}

export interface LiveBoard {
  lastSeenEventId: number;
  cards: Map<string, CheckpostCard>;
  feed: RegistryEvent[];
}

export function emptyBoard(): LiveBoard {
  return { lastSeenEventId: 0, cards: new Map(), feed: [] };
}

function card(board: LiveBoard, checkpostId: string): CheckpostCard {
  let c = board.cards.get(checkpostId);
  if (!c) {
    c = { checkpostId, gate: "open", lastDetection: null };
    board.cards.set(checkpostId, c);
  }
  return c;
}

/**
 * Fold a batch of events into the board. Events must continue the feed
 * without gaps; a gap means the cursor was mishandled and the caller should
 * resync from event id 0.
 */
export function applyEvents(board: LiveBoard, events: RegistryEvent[]): LiveBoard {
  for (const event of events) {
    if (event.event_id !== board.lastSeenEventId + 1) {
      throw new Error(
        `event feed gap: expected ${board.lastSeenEventId + 1}, got ${event.event_id}`,
      );
    }
    board.lastSeenEventId = event.event_id;
    board.feed.push(event);
    if (event.kind === "detection") {
      const c = card(board, event.payload.checkpost);
      c.lastDetection = {
        tag: event.payload.tag,
        verdict: event.payload.verdict,
        echoOk: event.payload.echo_ok,
        at: event.at,
      };
      if (event.payload.verdict === "A") c.gate = "closed";
    } else if (event.kind === "gate_released") {
      card(board, event.payload.checkpost).gate = "open";
    }
  }
  return board;
}

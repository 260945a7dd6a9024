// Incremental event polling with at most one in-flight request. The cursor
// is the board's lastSeenEventId; on a feed gap the board is rebuilt from 0.

import type { RegistryClient } from "./api.js";
import { applyEvents, emptyBoard, type LiveBoard } from "./board.js";

export class EventPoller {
  private inFlight = false;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private client: RegistryClient,
    public board: LiveBoard = emptyBoard(),
    private onUpdate: (board: LiveBoard) => void = () => {},
  ) {}

  /** One poll cycle; resolves when the board is up to date. */
  async pollOnce(): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    try {
      const res = await this.client.eventsSince(this.board.lastSeenEventId);
      try {
        applyEvents(this.board, res.events);
      } catch {
        // cursor went bad: rebuild from the full feed
        this.board = emptyBoard();
        const full = await this.client.eventsSince(0);
        applyEvents(this.board, full.events);
      }
      this.onUpdate(this.board);
    } finally {
      this.inFlight = false;
    }
  }

  start(intervalMs = 1000) {
    this.stop();
    this.timer = setInterval(() => void this.pollOnce(), intervalMs);
  }

  stop() {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }
}

// HTML rendering, pure string-in/string-out so it is testable without a DOM.
// Role gating here is cosmetic only; the server enforces authorization.

import type { Role } from "./api.js";
import type { LiveBoard } from "./board.js";

export interface SessionView {
  token: string;
  role: Role;
  loginId: string;
  lastSeenEventId: number;
}

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function renderLogin(error?: string): string {
  return `
<form id="login-form" class="login">
  <h2>Sign in</h2>
  ${error ? `<p class="error">${esc(error)}</p>` : ""}
  <input name="login_id" placeholder="login id" required>
  <input name="password" type="password" placeholder="password" required>
  <button type="submit">Log in</button>
</form>`;
}

export function renderCards(board: LiveBoard, session: SessionView): string {
  const cards = [...board.cards.values()]
    .sort((a, b) => a.checkpostId.localeCompare(b.checkpostId))
    .map((c) => {
      const detection = c.lastDetection
        ? `<p class="detection">last: <code>${esc(c.lastDetection.tag)}</code>
           <span class="verdict verdict-${c.lastDetection.verdict}">
           ${c.lastDetection.verdict === "A" ? "ARREST" : "GO"}</span></p>`
        : `<p class="detection">no detections yet</p>`;
      const release =
        session.role === "operator" && c.gate === "closed"
          ? `<button class="release" data-checkpost="${esc(c.checkpostId)}">Release gate</button>`
          : "";
      return `
<div class="card gate-${c.gate}" data-checkpost="${esc(c.checkpostId)}">
  <h3>${esc(c.checkpostId)}</h3>
  <p class="gate">gate: <b>${c.gate.toUpperCase()}</b></p>
  ${detection}
  ${release}
</div>`;
    });
  return `<div class="cards">${cards.join("")}</div>`;
}

export function renderFeed(board: LiveBoard, limit = 50): string {
  const rows = board.feed
    .slice(-limit)
    .reverse()
    .map(
      (e) =>
        `<tr><td>${e.event_id}</td><td>${e.at.toFixed(2)}</td>` +
        `<td>${esc(e.kind)}</td><td><code>${esc(JSON.stringify(e.payload))}</code></td></tr>`,
    );
  return `<table class="feed"><thead><tr><th>#</th><th>t</th><th>kind</th><th>payload</th></tr></thead>
<tbody>${rows.join("")}</tbody></table>`;
}

export function renderActions(session: SessionView): string {
  // owners report/clear their own cars; operators get the same form for any tag
  return `
<form id="report-form" class="actions">
  <input name="tag_id" placeholder="tag id (10 hex digits)" pattern="[0-9A-Fa-f]{10}" required>
  <button type="submit" name="action" value="report">Report missing</button>
  <button type="submit" name="action" value="clear">Clear report</button>
</form>
<p class="whoami">signed in as <b>${esc(session.loginId)}</b> (${session.role})</p>`;
}

export function renderApp(board: LiveBoard, session: SessionView): string {
  return `
<header><h1>Checkpoint network console</h1></header>
${renderActions(session)}
${renderCards(board, session)}
${renderFeed(board)}`;
}

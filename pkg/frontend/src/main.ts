// Browser entry point. Everything on screen is derived from the server event
// feed; user actions go straight to the HTTP API and the next poll picks up
// whatever they changed.

import { ApiError, RegistryClient, type Role } from "./api.js";
import { EventPoller } from "./poller.js";
import { renderApp, renderLogin, type SessionView } from "./views.js";

const root = document.getElementById("app")!;
const client = new RegistryClient(
  (window as any).RACTDAS_API_URL ?? "http://localhost:8000",
);

let session: SessionView | null = null;
const poller = new EventPoller(client, undefined, (board) => {
  if (session) {
    session.lastSeenEventId = board.lastSeenEventId;
    root.innerHTML = renderApp(board, session);
  }
});

function showLogin(error?: string) {
  poller.stop();
  session = null;
  root.innerHTML = renderLogin(error);
}

root.addEventListener("submit", (ev) => {
  const form = ev.target as HTMLFormElement;
  ev.preventDefault();
  const fields = new FormData(form, (ev as SubmitEvent).submitter);
  if (form.id === "login-form") {
    client
      .login(String(fields.get("login_id")), String(fields.get("password")))
      .then((res) => {
        session = {
          token: res.token,
          role: res.role as Role,
          loginId: res.login_id,
          lastSeenEventId: 0,
        };
        void poller.pollOnce().then(() => poller.start());
      })
      .catch((err) => showLogin(err instanceof ApiError ? err.message : String(err)));
  } else if (form.id === "report-form") {
    const tag = String(fields.get("tag_id")).toUpperCase();
    const call =
      fields.get("action") === "clear" ? client.clearReport(tag) : client.reportStolen(tag);
    call.then(() => poller.pollOnce()).catch((err) => alert(String(err.message ?? err)));
  }
});

root.addEventListener("click", (ev) => {
  const el = ev.target as HTMLElement;
  if (el.classList.contains("release") && el.dataset.checkpost) {
    client
      .releaseGate(el.dataset.checkpost)
      .then(() => poller.pollOnce())
      .catch((err) => alert(String(err.message ?? err)));
  }
});

showLogin();

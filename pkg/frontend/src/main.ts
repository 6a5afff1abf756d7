import { ApiClient } from "./api.js";
import { TrialSession } from "./session.js";
import { SessionUi } from "./ui.js";

function listenerToken(): string {
  const stored = localStorage.getItem("stylevc-listener");
  if (stored) return stored;
  const entered = window.prompt("Pick a listener name (any token):") ?? "";
  const token = entered.trim() || `anon-${Math.random().toString(36).slice(2, 10)}`;
  localStorage.setItem("stylevc-listener", token);
  return token;
}

function main(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const params = new URLSearchParams(window.location.search);
  const testId = params.get("test");
  if (!testId) {
    root.textContent = "Add ?test=<test id> to the URL to join a listening test.";
    return;
  }
  const api = new ApiClient("");
  const session = new TrialSession(api, testId, listenerToken());
  new SessionUi(root, session, api);
  void session.join();
}

main();

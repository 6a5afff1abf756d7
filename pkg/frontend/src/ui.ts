// DOM view for a listener session. Labels are only ever "A", "B", "X";
// system identities never reach the browser.

import type { Choice, ListeningApi } from "./api.js";
import type { SessionView, Slot, TrialSession } from "./session.js";

const STYLE_FOCUS_HINT =
  "Focus on speaking style: tone, stress, speaking speed, phrasing, pausing.";

const SLOT_TITLES: Record<Slot, string> = {
  X: "Reference X",
  A: "Sample A",
  B: "Sample B",
};

export class SessionUi {
  private audioElements = new Map<Slot, HTMLAudioElement>();
  private renderedTrialId: string | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly session: TrialSession,
    private readonly api: ListeningApi,
    private readonly doc: Document = document,
  ) {
    session.subscribe((view) => this.render(view));
    this.doc.addEventListener("keydown", (event) => this.onKey(event));
  }

  render(view: SessionView): void {
    switch (view.phase) {
      case "loading":
        if (this.renderedTrialId === null) {
          this.root.textContent = "Loading…";
        }
        return;
      case "error":
        this.renderError(view);
        return;
      case "done":
        this.renderDone(view);
        return;
      case "in-trial":
        this.renderTrial(view);
        return;
      default:
        this.root.textContent = "";
    }
  }

  private renderError(view: SessionView): void {
    this.renderedTrialId = null;
    this.root.innerHTML = "";
    const box = this.el("div", "error-box");
    box.append(
      this.el("p", "error-message", `Something went wrong: ${view.error ?? "unknown error"}`),
    );
    const retry = this.el("button", "retry-btn", "Retry") as HTMLButtonElement;
    retry.id = "retry";
    retry.addEventListener("click", () => void this.session.retry());
    box.append(retry);
    this.root.append(box);
  }

  private renderDone(view: SessionView): void {
    this.renderedTrialId = null;
    this.root.innerHTML = "";
    const box = this.el("div", "done-box");
    box.append(
      this.el("h2", "", "All done — thank you!"),
      this.el(
        "p",
        "",
        `You answered ${view.progress.total} of ${view.progress.total} trials.`,
      ),
    );
    this.root.append(box);
  }

  private renderTrial(view: SessionView): void {
    const trial = view.trial;
    if (!trial) return;
    if (this.renderedTrialId !== trial.trial_id) {
      this.buildTrialDom(view);
      this.renderedTrialId = trial.trial_id;
    }
    this.updateDynamicState(view);
  }

  private buildTrialDom(view: SessionView): void {
    const trial = view.trial!;
    this.root.innerHTML = "";
    this.audioElements.clear();

    const header = this.el("div", "trial-header");
    header.append(
      this.el("h2", "", `Trial ${trial.index + 1} of ${trial.total}`),
      this.el("p", "prompt", trial.prompt || "Listen to the samples, then choose."),
    );
    if (trial.kind === "ABX") {
      header.append(this.el("p", "style-hint", STYLE_FOCUS_HINT));
    }
    this.root.append(header);

    const players = this.el("div", "players");
    for (const slot of view.slots) {
      players.append(this.buildPlayer(slot));
    }
    this.root.append(players);

    const choices = this.el("div", "choices");
    const options: Array<[Choice, string]> = [
      ["A", trial.kind === "ABX" ? "A is closer to X" : "Prefer A"],
      ["B", trial.kind === "ABX" ? "B is closer to X" : "Prefer B"],
      ["NP", "No preference"],
    ];
    for (const [choice, label] of options) {
      const btn = this.el("button", "choice-btn", label) as HTMLButtonElement;
      btn.dataset.choice = choice;
      btn.disabled = true;
      btn.addEventListener("click", () => void this.session.choose(choice));
      choices.append(btn);
    }
    this.root.append(choices);
    this.root.append(
      this.el("p", "gate-hint", "Play every sample at least once to unlock the choices."),
    );
  }

  private buildPlayer(slot: Slot): HTMLElement {
    const wrap = this.el("div", "player");
    wrap.dataset.slot = slot;
    wrap.append(this.el("h3", "", SLOT_TITLES[slot]));
    const audio = this.doc.createElement("audio");
    audio.controls = true;
    audio.preload = "auto";
    audio.src = this.api.audioUrl(this.session.audioIdFor(slot));
    audio.addEventListener("ended", () => this.session.onPlayed(slot));
    this.audioElements.set(slot, audio);
    wrap.append(audio);
    const play = this.el("button", "play-btn", `Play ${slot}`) as HTMLButtonElement;
    play.dataset.playSlot = slot;
    play.addEventListener("click", () => void audio.play());
    wrap.append(play);
    const badge = this.el("span", "played-badge", "not played yet");
    badge.dataset.playedBadge = slot;
    wrap.append(badge);
    return wrap;
  }

  private updateDynamicState(view: SessionView): void {
    for (const btn of this.root.querySelectorAll<HTMLButtonElement>(".choice-btn")) {
      btn.disabled = !view.canSubmit;
    }
    for (const slot of view.slots) {
      const badge = this.root.querySelector<HTMLElement>(
        `[data-played-badge="${slot}"]`,
      );
      const count = view.playCounts[slot] ?? 0;
      if (badge) {
        badge.textContent = count > 0 ? `played ${count}x` : "not played yet";
      }
    }
    const hint = this.root.querySelector<HTMLElement>(".gate-hint");
    if (hint) hint.style.display = view.canSubmit ? "none" : "";
  }

  private onKey(event: KeyboardEvent): void {
    const view = this.session.view();
    if (view.phase !== "in-trial") return;
    const key = event.key.toLowerCase();
    const playKeys: Record<string, Slot> = { a: "A", b: "B", x: "X" };
    if (key in playKeys) {
      const slot = playKeys[key]!;
      if (view.slots.includes(slot)) {
        void this.audioElements.get(slot)?.play();
      }
      return;
    }
    if (!view.canSubmit) return;
    if (key === "1") void this.session.choose("A");
    else if (key === "2") void this.session.choose("B");
    else if (key === "0") void this.session.choose("NP");
  }

  private el(tag: string, className = "", text = ""): HTMLElement {
    const node = this.doc.createElement(tag);
    if (className) node.className = className;
    if (text) node.textContent = text;
    return node;
  }
}

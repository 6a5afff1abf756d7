// Listener session state machine, independent of the DOM so it can be
// driven headlessly in tests. The view layer renders SessionView snapshots
// and forwards playback/choice events.

import type { Choice, ListeningApi, ServedTrial } from "./api.js";

export type Slot = "A" | "B" | "X";

export type SessionPhase = "idle" | "loading" | "in-trial" | "done" | "error";

export interface SessionView {
  phase: SessionPhase;
  testId: string;
  listener: string;
  trial: ServedTrial | null;
  /** slots of the current trial, in presentation order */
  slots: Slot[];
  /** play counts per slot for the current trial */
  playCounts: Record<string, number>;
  /** submit controls stay disabled until every slot was played once */
  canSubmit: boolean;
  progress: { answered: number; total: number };
  error: string | null;
}

export class TrialSession {
  private phase: SessionPhase = "idle";
  private trial: ServedTrial | null = null;
  private playCounts = new Map<Slot, number>();
  private total = 0;
  private answered = 0;
  private lastError: string | null = null;
  private listeners = new Set<(view: SessionView) => void>();

  constructor(
    private readonly api: ListeningApi,
    readonly testId: string,
    readonly listener: string,
  ) {}

  subscribe(fn: (view: SessionView) => void): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private emit(): void {
    const view = this.view();
    for (const fn of this.listeners) fn(view);
  }

  slots(): Slot[] {
    if (!this.trial) return [];
    return this.trial.kind === "ABX" ? ["X", "A", "B"] : ["A", "B"];
  }

  audioIdFor(slot: Slot): string {
    if (!this.trial) throw new Error("no active trial");
    if (slot === "A") return this.trial.stimulus_a;
    if (slot === "B") return this.trial.stimulus_b;
    if (!this.trial.reference_x) throw new Error("trial has no reference");
    return this.trial.reference_x;
  }

  view(): SessionView {
    const counts: Record<string, number> = {};
    for (const slot of this.slots()) {
      counts[slot] = this.playCounts.get(slot) ?? 0;
    }
    return {
      phase: this.phase,
      testId: this.testId,
      listener: this.listener,
      trial: this.trial,
      slots: this.slots(),
      playCounts: counts,
      canSubmit: this.canSubmit(),
      progress: { answered: this.answered, total: this.total },
      error: this.lastError,
    };
  }

  allPlayed(): boolean {
    return this.slots().every((slot) => (this.playCounts.get(slot) ?? 0) >= 1);
  }

  canSubmit(): boolean {
    return this.phase === "in-trial" && this.trial !== null && this.allPlayed();
  }

  /** Minimum plays over the trial's stimuli, reported with the response. */
  replayCount(): number {
    const counts = this.slots().map((slot) => this.playCounts.get(slot) ?? 0);
    return counts.length ? Math.min(...counts) : 0;
  }

  async join(): Promise<SessionView> {
    this.phase = "loading";
    this.lastError = null;
    this.emit();
    try {
      const info = await this.api.getTest(this.testId);
      this.total = info.n_trials;
      await this.fetchNext();
    } catch (err) {
      this.phase = "error";
      this.lastError = err instanceof Error ? err.message : String(err);
      this.emit();
    }
    return this.view();
  }

  /** Retry after a transient failure without losing session identity. */
  async retry(): Promise<SessionView> {
    return this.join();
  }

  private async fetchNext(): Promise<void> {
    const next = await this.api.nextTrial(this.testId, this.listener);
    this.playCounts.clear();
    if (next.done) {
      this.phase = "done";
      this.trial = null;
      this.answered = this.total;
    } else {
      this.phase = "in-trial";
      this.trial = next;
      this.answered = next.index;
      this.total = next.total;
    }
    this.emit();
  }

  onPlayed(slot: Slot): void {
    if (this.phase !== "in-trial") return;
    if (!this.slots().includes(slot)) return;
    this.playCounts.set(slot, (this.playCounts.get(slot) ?? 0) + 1);
    this.emit();
  }

  async choose(choice: Choice): Promise<SessionView> {
    if (!this.canSubmit() || !this.trial) {
      throw new Error("cannot submit before every stimulus was played");
    }
    const body = {
      trial_id: this.trial.trial_id,
      listener_id: this.listener,
      choice,
      replay_count: this.replayCount(),
    };
    this.phase = "loading";
    this.emit();
    try {
      // a conflict means the server already has this answer (duplicate
      // submit race); either way the server state is authoritative, so
      // advance to whatever it serves next
      await this.api.submitResponse(this.testId, body);
      await this.fetchNext();
    } catch (err) {
      this.phase = "error";
      this.lastError = err instanceof Error ? err.message : String(err);
      this.emit();
    }
    return this.view();
  }
}

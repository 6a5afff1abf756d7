"""AB / ABX listening-test service.

Administers trials over HTTP: per-listener shuffled trial order, randomized
A/B slot assignment recorded server-side, at-most-once response storage,
and de-randomized aggregation down to system identities.

Persistence is file-based: one JSON document per test definition plus an
append-only JSONL response log, both under the service's data directory.
"""

import json
import random
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import InvalidInputError
from .evaluation import NO_PREFERENCE, PreferenceSummary, PreferenceVote, aggregate_preferences


class NotFoundError(InvalidInputError):
    pass


class ProtocolError(InvalidInputError):
    pass


class ConflictError(InvalidInputError):
    pass


VALID_CHOICES = ("A", "B", NO_PREFERENCE)


@dataclass(frozen=True)
class TrialDefinition:
    trial_id: str
    stimulus_a: str  # audio id produced by system_a
    stimulus_b: str  # audio id produced by system_b
    system_a: str
    system_b: str
    prompt: str = ""
    reference_x: str | None = None


@dataclass(frozen=True)
class TestDefinition:
    test_id: str
    kind: str  # "AB" or "ABX"
    trials: tuple[TrialDefinition, ...]
    audio: dict[str, str]  # audio id -> file path


@dataclass(frozen=True)
class ServedTrial:
    """What a listener sees: slots only, system identities hidden."""

    trial_id: str
    kind: str
    slot_a: str  # audio id presented in slot A
    slot_b: str
    reference_x: str | None
    prompt: str
    index: int
    total: int


@dataclass
class StoredResponse:
    test_id: str
    trial_id: str
    listener_id: str
    choice: str  # A | B | NP (slot-level)
    replay_count: int
    timestamp: float


@dataclass
class _ListenerSession:
    order: list[str] = field(default_factory=list)
    swapped: dict[str, bool] = field(default_factory=dict)  # trial -> slots swapped
    answered: set[str] = field(default_factory=set)
    served: set[str] = field(default_factory=set)


class ListeningService:
    def __init__(self, data_dir: str | Path, seed: int = 0):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.seed = seed
        self._lock = threading.Lock()
        self._tests: dict[str, TestDefinition] = {}
        self._sessions: dict[tuple[str, str], _ListenerSession] = {}
        self._responses: dict[str, list[StoredResponse]] = {}
        self._load_existing()

    # ------------------------------------------------------------------
    # persistence

    def _test_dir(self, test_id: str) -> Path:
        return self.data_dir / test_id

    def _load_existing(self) -> None:
        for test_file in sorted(self.data_dir.glob("*/test.json")):
            doc = json.loads(test_file.read_text())
            trials = tuple(TrialDefinition(**t) for t in doc.pop("trials"))
            test = TestDefinition(trials=trials, **doc)
            self._tests[test.test_id] = test
            self._responses[test.test_id] = []
            log = test_file.parent / "responses.jsonl"
            if log.exists():
                for line in log.read_text().splitlines():
                    if line.strip():
                        self._responses[test.test_id].append(StoredResponse(**json.loads(line)))
            sessions = test_file.parent / "sessions.jsonl"
            if sessions.exists():
                for line in sessions.read_text().splitlines():
                    if line.strip():
                        doc = json.loads(line)
                        key = (test.test_id, doc["listener_id"])
                        self._sessions[key] = _ListenerSession(
                            order=doc["order"],
                            swapped={k: bool(v) for k, v in doc["swapped"].items()},
                        )
            for r in self._responses[test.test_id]:
                key = (test.test_id, r.listener_id)
                if key in self._sessions:
                    self._sessions[key].answered.add(r.trial_id)

    def _persist_test(self, test: TestDefinition) -> None:
        d = self._test_dir(test.test_id)
        d.mkdir(parents=True, exist_ok=True)
        doc = asdict(test)
        doc["trials"] = [asdict(t) for t in test.trials]
        (d / "test.json").write_text(json.dumps(doc, indent=2))

    def _persist_session(self, test_id: str, listener_id: str,
                         session: _ListenerSession) -> None:
        path = self._test_dir(test_id) / "sessions.jsonl"
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps({
                "listener_id": listener_id,
                "order": session.order,
                "swapped": session.swapped,
            }) + "\n")

    def _persist_response(self, response: StoredResponse) -> None:
        path = self._test_dir(response.test_id) / "responses.jsonl"
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps(asdict(response)) + "\n")

    # ------------------------------------------------------------------
    # operations

    def create_test(self, test_id: str, kind: str,
                    trials: list[TrialDefinition], audio: dict[str, str]) -> str:
        if kind not in ("AB", "ABX"):
            raise InvalidInputError(f"unknown test kind {kind!r}")
        if not trials:
            raise InvalidInputError("a test needs at least one trial")
        with self._lock:
            if test_id in self._tests:
                raise ConflictError(f"test {test_id!r} already exists")
            seen = set()
            for t in trials:
                if t.trial_id in seen:
                    raise InvalidInputError(f"duplicate trial id {t.trial_id!r}")
                seen.add(t.trial_id)
                if kind == "ABX" and not t.reference_x:
                    raise InvalidInputError(f"ABX trial {t.trial_id!r} missing reference")
                if kind == "AB" and t.reference_x:
                    raise InvalidInputError(f"AB trial {t.trial_id!r} must not carry a reference")
                needed = [t.stimulus_a, t.stimulus_b] + ([t.reference_x] if t.reference_x else [])
                for audio_id in needed:
                    if audio_id not in audio:
                        raise InvalidInputError(
                            f"trial {t.trial_id!r} references unregistered audio {audio_id!r}"
                        )
            for audio_id, path in audio.items():
                if not Path(path).is_file():
                    raise InvalidInputError(f"audio file for {audio_id!r} not found: {path}")
            test = TestDefinition(test_id, kind, tuple(trials), dict(audio))
            self._tests[test_id] = test
            self._responses[test_id] = []
            self._persist_test(test)
        return test_id

    def get_test(self, test_id: str) -> TestDefinition:
        test = self._tests.get(test_id)
        if test is None:
            raise NotFoundError(f"unknown test {test_id!r}")
        return test

    def _session(self, test: TestDefinition, listener_id: str) -> _ListenerSession:
        key = (test.test_id, listener_id)
        session = self._sessions.get(key)
        if session is None:
            rng = random.Random(f"{self.seed}:{test.test_id}:{listener_id}")
            order = [t.trial_id for t in test.trials]
            rng.shuffle(order)
            swapped = {t.trial_id: rng.random() < 0.5 for t in test.trials}
            session = _ListenerSession(order=order, swapped=swapped)
            self._sessions[key] = session
            self._persist_session(test.test_id, listener_id, session)
        return session

    def next_trial(self, test_id: str, listener_id: str) -> ServedTrial | None:
        """The listener's first unanswered trial, or None when done.

        Idempotent: repeated calls without an intervening response return
        the same trial.
        """
        if not listener_id:
            raise InvalidInputError("listener id must be non-empty")
        test = self.get_test(test_id)
        with self._lock:
            session = self._session(test, listener_id)
            trials_by_id = {t.trial_id: t for t in test.trials}
            for position, trial_id in enumerate(session.order):
                if trial_id in session.answered:
                    continue
                trial = trials_by_id[trial_id]
                swap = session.swapped[trial_id]
                session.served.add(trial_id)
                return ServedTrial(
                    trial_id=trial_id,
                    kind=test.kind,
                    slot_a=trial.stimulus_b if swap else trial.stimulus_a,
                    slot_b=trial.stimulus_a if swap else trial.stimulus_b,
                    reference_x=trial.reference_x,
                    prompt=trial.prompt,
                    index=len(session.answered),
                    total=len(test.trials),
                )
            return None

    def submit_response(self, test_id: str, trial_id: str, listener_id: str,
                        choice: str, replay_count: int, timestamp: float) -> None:
        if choice not in VALID_CHOICES:
            raise InvalidInputError(f"choice must be one of {VALID_CHOICES}")
        if replay_count < 1:
            raise InvalidInputError("each stimulus must be played at least once")
        test = self.get_test(test_id)
        if trial_id not in {t.trial_id for t in test.trials}:
            raise NotFoundError(f"unknown trial {trial_id!r}")
        with self._lock:
            session = self._sessions.get((test_id, listener_id))
            if session is None or trial_id not in session.served:
                raise ProtocolError("trial was never served to this listener")
            if trial_id in session.answered:
                raise ConflictError("response already recorded for this trial")
            response = StoredResponse(test_id, trial_id, listener_id, choice,
                                      replay_count, timestamp)
            session.answered.add(trial_id)
            self._responses[test_id].append(response)
            self._persist_response(response)

    def derandomized_votes(self, test_id: str) -> list[PreferenceVote]:
        """Map slot-level choices back to the systems behind them."""
        test = self.get_test(test_id)
        trials_by_id = {t.trial_id: t for t in test.trials}
        votes = []
        for r in self._responses[test_id]:
            if r.choice == NO_PREFERENCE:
                votes.append(PreferenceVote(test_id, NO_PREFERENCE))
                continue
            session = self._sessions[(test_id, r.listener_id)]
            trial = trials_by_id[r.trial_id]
            swap = session.swapped[r.trial_id]
            chose_slot_a = r.choice == "A"
            chose_stimulus_a = chose_slot_a != swap  # swap flips slot -> stimulus
            votes.append(PreferenceVote(
                test_id, trial.system_a if chose_stimulus_a else trial.system_b
            ))
        return votes

    def test_results(self, test_id: str) -> PreferenceSummary:
        votes = self.derandomized_votes(test_id)
        if not votes:
            raise ProtocolError(f"test {test_id!r} has no responses yet")
        return aggregate_preferences(votes)

    def audio_path(self, audio_id: str) -> Path:
        for test in self._tests.values():
            if audio_id in test.audio:
                return Path(test.audio[audio_id])
        raise NotFoundError(f"unknown audio id {audio_id!r}")


# ---------------------------------------------------------------------------
# HTTP layer


def create_app(service: ListeningService, webapp_dir: str | Path | None = None):
    import time as time_mod

    from fastapi import FastAPI, HTTPException, Query
    from fastapi.responses import FileResponse, JSONResponse
    from pydantic import BaseModel, Field

    class TrialBody(BaseModel):
        trial_id: str
        stimulus_a: str
        stimulus_b: str
        system_a: str
        system_b: str
        prompt: str = ""
        reference_x: str | None = None

    class CreateTestBody(BaseModel):
        test_id: str
        kind: str
        trials: list[TrialBody]
        audio: dict[str, str]

    class ResponseBody(BaseModel):
        trial_id: str
        listener_id: str
        choice: str
        replay_count: int = Field(ge=1)

    app = FastAPI(title="stylevc listening tests")

    def _wrap(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ProtocolError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except InvalidInputError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.post("/tests", status_code=201)
    def post_test(body: CreateTestBody):
        trials = [TrialDefinition(**t.model_dump()) for t in body.trials]
        test_id = _wrap(service.create_test, body.test_id, body.kind, trials, body.audio)
        return {"test_id": test_id, "n_trials": len(trials)}

    @app.get("/tests/{test_id}")
    def get_test(test_id: str):
        test = _wrap(service.get_test, test_id)
        return {
            "test_id": test.test_id,
            "kind": test.kind,
            "n_trials": len(test.trials),
        }

    @app.get("/tests/{test_id}/next")
    def get_next(test_id: str, listener: str = Query(...)):
        trial = _wrap(service.next_trial, test_id, listener)
        if trial is None:
            return JSONResponse({"done": True})
        return {
            "done": False,
            "trial_id": trial.trial_id,
            "kind": trial.kind,
            "stimulus_a": trial.slot_a,
            "stimulus_b": trial.slot_b,
            "reference_x": trial.reference_x,
            "prompt": trial.prompt,
            "index": trial.index,
            "total": trial.total,
        }

    @app.post("/tests/{test_id}/responses", status_code=201)
    def post_response(test_id: str, body: ResponseBody):
        _wrap(
            service.submit_response, test_id, body.trial_id, body.listener_id,
            body.choice, body.replay_count, time_mod.time(),
        )
        return {"accepted": True}

    @app.get("/tests/{test_id}/results")
    def get_results(test_id: str):
        summary = _wrap(service.test_results, test_id)
        return {
            "test_id": summary.test_id,
            "n_responses": summary.n_responses,
            "counts": summary.counts,
            "percentages": summary.percentages,
        }

    @app.get("/audio/{audio_id}")
    def get_audio(audio_id: str):
        path = _wrap(service.audio_path, audio_id)
        return FileResponse(path, media_type="audio/wav")

    if webapp_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(webapp_dir), html=True), name="webapp")

    return app

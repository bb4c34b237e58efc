"""HTTP session service for human play.

A session walks a participant through num_train_tasks tasks from the train
partition followed by num_test_tasks from the test partition, using the same
recipe split as agent experiments. The client sees entity names only; recipe
validity is never exposed. Every step is appended to a JSON-lines trajectory
log so success accounting can be recomputed independently.

Endpoints (all JSON):
    POST /sessions                    create a session
    GET  /sessions/{id}/state         current view
    POST /sessions/{id}/actions       {"slot": int} advance one step
    GET  /sessions/{id}/report        per-phase success summary
    GET  /sessions/{id}/log           raw trajectory log (text/plain)
    GET  /schema                      payload schema document
"""

from __future__ import annotations

import json
import secrets
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from .env import RewardConfig, default_max_steps, reset, sample_task, state_digest, step
from .recipes import EMPTY, RecipeBook, RecipeSplit
from .seeding import mix_seeds


@dataclass(frozen=True)
class ProtocolConfig:
    num_train_tasks: int = 40
    num_test_tasks: int = 40
    depth: int = 1
    num_distractors: int = 1
    show_recipe_on_failure: bool = False


@dataclass
class Session:
    id: str
    seed: int
    participant: str
    protocol: ProtocolConfig
    task_index: int = 0            # position in the combined train+test sequence
    phase: str = "train"
    task: object = None
    state: object = None
    results: list = field(default_factory=list)
    log_records: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


class CreateSessionRequest(BaseModel):
    seed: int = 0
    participant: str = "anonymous"
    num_train_tasks: int = 40
    num_test_tasks: int = 40
    depth: int = 1
    num_distractors: int = 1
    show_recipe_on_failure: bool = False


class ActionRequest(BaseModel):
    slot: int


def create_app(book: RecipeBook, split: RecipeSplit,
               log_dir: str | None = None,
               cors_origins: list[str] | None = None) -> FastAPI:
    app = FastAPI(title="craftbench play service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, Session] = {}
    reward_cfg = RewardConfig()  # humans see sparse outcomes only

    def phase_of(s: Session) -> str:
        if s.task_index >= s.protocol.num_train_tasks + s.protocol.num_test_tasks:
            return "finished"
        if s.task_index >= s.protocol.num_train_tasks:
            return "test"
        return "train"

    def load_task(s: Session) -> None:
        s.phase = phase_of(s)
        if s.phase == "finished":
            s.task = None
            s.state = None
            return
        partition = s.phase
        s.task = sample_task(book, split, partition, s.protocol.depth,
                             s.protocol.num_distractors,
                             mix_seeds(s.seed, 0x5E55, s.task_index))
        s.state = reset(s.task)

    def view(s: Session) -> dict:
        base = {
            "session_id": s.id,
            "phase": s.phase,
            "task_index": s.task_index,
            "num_train_tasks": s.protocol.num_train_tasks,
            "num_test_tasks": s.protocol.num_test_tasks,
        }
        if s.phase == "finished":
            base["summary"] = summarize(s)
            return base
        max_steps = default_max_steps(s.protocol.depth)
        base.update({
            "goal": book.name(s.state.goal),
            "table": [book.name(e) for e in s.state.table],
            "selected": None if s.state.selected == EMPTY else book.name(s.state.selected),
            "steps_taken": s.state.steps_taken,
            "steps_remaining": max_steps - s.state.steps_taken,
        })
        return base

    def summarize(s: Session) -> dict:
        out = {}
        for phase in ("train", "test"):
            rows = [r for r in s.results if r["phase"] == phase]
            n = len(rows)
            wins = sum(1 for r in rows if r["success"])
            out[phase] = {
                "tasks": n,
                "successes": wins,
                "success_rate": wins / n if n else 0.0,
            }
        return out

    def write_log(s: Session, record: dict) -> None:
        s.log_records.append(record)
        if log_dir:
            path = Path(log_dir) / f"session-{s.id}.jsonl"
            with open(path, "a", encoding="utf-8") as f:
                f.write(json.dumps(record) + "\n")

    def get_session(session_id: str) -> Session:
        s = sessions.get(session_id)
        if s is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return s

    @app.post("/sessions")
    def create_session(req: CreateSessionRequest):
        protocol = ProtocolConfig(
            num_train_tasks=req.num_train_tasks,
            num_test_tasks=req.num_test_tasks,
            depth=req.depth,
            num_distractors=req.num_distractors,
            show_recipe_on_failure=req.show_recipe_on_failure,
        )
        s = Session(id=secrets.token_hex(8), seed=req.seed,
                    participant=req.participant, protocol=protocol)
        load_task(s)
        sessions[s.id] = s
        return {"session_id": s.id, "state": view(s)}

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str):
        s = get_session(session_id)
        with s.lock:
            return view(s)

    @app.post("/sessions/{session_id}/actions")
    def post_action(session_id: str, req: ActionRequest):
        s = get_session(session_id)
        with s.lock:
            if s.phase == "finished":
                raise HTTPException(status_code=409, detail="session finished")
            if not 0 <= req.slot < len(s.state.table):
                raise HTTPException(status_code=400, detail="slot out of range")
            max_steps = default_max_steps(s.protocol.depth)
            pre_digest = state_digest(s.state)
            out = step(s.state, req.slot, book, reward_cfg, max_steps)
            s.state = out.state
            write_log(s, {
                "session": s.id,
                "phase": s.phase,
                "task_index": s.task_index,
                "step": out.state.steps_taken,
                "state_digest": pre_digest,
                "action": req.slot,
                "reward": out.reward,
                "events": [e[0] for e in out.events],
                "done": out.state.done,
                "success": out.state.success,
            })
            response = {
                "events": [e[0] for e in out.events],
                "reward": out.reward,
                "done": out.state.done,
                "success": out.state.success,
            }
            if out.state.done:
                s.results.append({
                    "phase": s.phase,
                    "task_index": s.task_index,
                    "goal": book.name(s.task.goal),
                    "success": bool(out.state.success),
                    "steps": out.state.steps_taken,
                })
                if (not out.state.success and s.phase == "train"
                        and s.protocol.show_recipe_on_failure):
                    final = s.task.intended_tree[-1]
                    response["feedback"] = {
                        "goal": book.name(s.task.goal),
                        "recipe": [book.name(final.ingredients[0]),
                                   book.name(final.ingredients[1])],
                    }
                s.task_index += 1
                load_task(s)
            response["state"] = view(s)
            return response

    @app.get("/sessions/{session_id}/report")
    def get_report(session_id: str):
        s = get_session(session_id)
        with s.lock:
            return {
                "session_id": s.id,
                "participant": s.participant,
                "protocol": {
                    "num_train_tasks": s.protocol.num_train_tasks,
                    "num_test_tasks": s.protocol.num_test_tasks,
                    "depth": s.protocol.depth,
                    "num_distractors": s.protocol.num_distractors,
                    "max_steps": default_max_steps(s.protocol.depth),
                },
                "phase": s.phase,
                "completed_tasks": len(s.results),
                "summary": summarize(s),
                "results": list(s.results),
            }

    @app.get("/sessions/{session_id}/log", response_class=PlainTextResponse)
    def get_log(session_id: str):
        s = get_session(session_id)
        with s.lock:
            return "\n".join(json.dumps(r) for r in s.log_records) + "\n"

    @app.get("/schema")
    def get_schema():
        text = resources.files("craftbench.data").joinpath("api-schema.json").read_text("utf-8")
        return json.loads(text)

    return app


def serve(book: RecipeBook, split: RecipeSplit, host: str = "127.0.0.1",
          port: int = 8000, log_dir: str | None = None) -> None:
    import uvicorn

    app = create_app(book, split, log_dir=log_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")

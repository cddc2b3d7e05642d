"""HTTP service for human annotation campaigns.

Serves each annotator their subset of tuples in a fixed order, validates
and persists judgments to an append-only JSONL journal (replayed on
start, so a restart loses nothing), reports progress, exports the
journal, and hosts the browser UI's static assets.
"""

import datetime
import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import HTMLResponse, JSONResponse, Response, StreamingResponse
from fastapi.staticfiles import StaticFiles

from .annotate import AnnotatorId, Judgment, JudgmentStore
from .corpus import Corpus, ingest
from .design import Design, load_design

log = logging.getLogger(__name__)


class ServiceError(Exception):
    pass


@dataclass
class Campaign:
    """Who annotates which tuples; loaded from a JSON file that also names
    the corpus and design the campaign runs over."""
    name: str
    corpus_path: Path
    design_path: Path
    annotators: dict[str, list[str]] = field(default_factory=dict)


def load_campaign(path: str | Path) -> Campaign:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    for key in ("corpus", "design", "annotators"):
        if key not in obj:
            raise ServiceError(f"campaign file lacks {key!r}")
    base = path.parent
    return Campaign(
        name=obj.get("name", path.stem),
        corpus_path=(base / obj["corpus"]).resolve(),
        design_path=(base / obj["design"]).resolve(),
        annotators={str(a): list(ts) for a, ts in obj["annotators"].items()},
    )


def save_campaign(campaign: Campaign, path: str | Path) -> None:
    path = Path(path)
    obj = {
        "name": campaign.name,
        "corpus": str(campaign.corpus_path),
        "design": str(campaign.design_path),
        "annotators": campaign.annotators,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=2)


_PLACEHOLDER_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>annotation service</title></head>
<body><p>The annotation service is running. No UI build was found; point
--static at a built frontend to serve it here. The API lives under
/api/v1/.</p></body></html>"""


def create_app(corpus: Corpus, design: Design, campaign: Campaign,
               journal_path: str | Path, static_dir: str | Path | None = None) -> FastAPI:
    """Wire one campaign into a FastAPI app.

    The journal is replayed into memory here; afterwards every accepted
    submission is appended under a single lock that also guards the
    in-memory view, which keeps duplicate checks race-free.
    """
    texts = corpus.by_id()
    tuples = design.by_id()
    k = design.params.k
    for annotator, tuple_ids in campaign.annotators.items():
        unknown = [t for t in tuple_ids if t not in tuples]
        if unknown:
            raise ServiceError(f"campaign assigns {annotator} unknown "
                               f"tuple(s): {unknown[:3]}")

    store = JudgmentStore(journal_path)
    lock = threading.Lock()
    # (annotator name, tuple_id) -> Judgment, valid rows only
    view: dict[tuple[str, str], Judgment] = {}
    for j in store.load():
        if j.valid:
            view[(j.annotator.name, j.tuple_id)] = j
    if view:
        log.info("journal replay: %d judgment(s) restored", len(view))

    app = FastAPI(title=f"bws annotation service: {campaign.name}")

    def _reject(reason: str) -> JSONResponse:
        return JSONResponse(status_code=422, content={"reason": reason})

    @app.get("/api/v1/assignments/next")
    def next_assignment(annotator: str):
        subset = campaign.annotators.get(annotator)
        if subset is None:
            return JSONResponse(status_code=404,
                                content={"reason": f"unknown annotator {annotator!r}"})
        with lock:
            done = sum(1 for t in subset if (annotator, t) in view)
            pending = next((t for t in subset if (annotator, t) not in view), None)
        if pending is None:
            return Response(status_code=204)
        t = tuples[pending]
        return {
            "annotator_id": annotator,
            "tuple_id": pending,
            "texts": [texts[rid].text for rid in t.member_ids],
            "k": k,
            "position": done + 1,
            "total": len(subset),
            "issued_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }

    @app.post("/api/v1/judgments", status_code=201)
    def submit_judgment(body: dict):
        annotator = body.get("annotator_id")
        tuple_id = body.get("tuple_id")
        best = body.get("best_index")
        worst = body.get("worst_index")
        if not isinstance(annotator, str) or not isinstance(tuple_id, str):
            return _reject("annotator_id and tuple_id must be strings")
        subset = campaign.annotators.get(annotator)
        if subset is None:
            return _reject(f"unknown annotator {annotator!r}")
        if tuple_id not in subset:
            return _reject(f"tuple {tuple_id} is not assigned to {annotator}")
        for name, value in (("best_index", best), ("worst_index", worst)):
            if isinstance(value, bool) or not isinstance(value, int) \
                    or not 1 <= value <= k:
                return _reject(f"{name} must be an integer in 1..{k}")
        if best == worst:
            return _reject("best and worst must differ")
        judgment = Judgment(
            tuple_id=tuple_id,
            annotator=AnnotatorId("human", annotator),
            best_index=best, worst_index=worst, valid=True,
            timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        )
        with lock:
            stored = view.get((annotator, tuple_id))
            if stored is not None:
                if (stored.best_index, stored.worst_index) == (best, worst):
                    return {"status": "accepted", "duplicate": True}
                return _reject("tuple already judged with different picks")
            store.append(judgment)
            view[(annotator, tuple_id)] = judgment
        return {"status": "accepted", "duplicate": False}

    @app.get("/api/v1/progress")
    def progress():
        with lock:
            per = {}
            judged_total = 0
            for annotator, subset in campaign.annotators.items():
                done = sum(1 for t in subset if (annotator, t) in view)
                per[annotator] = {"judged": done, "total": len(subset)}
                judged_total += done
        total = sum(len(s) for s in campaign.annotators.values())
        return {"campaign": campaign.name, "annotators": per,
                "overall": judged_total / total if total else 0.0}

    @app.get("/api/v1/export")
    def export():
        with lock:
            rows = [view[key].to_row()
                    for key in sorted(view.keys())]

        def stream():
            for row in rows:
                yield json.dumps(row, ensure_ascii=False) + "\n"
        return StreamingResponse(stream(), media_type="application/x-ndjson")

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    else:
        @app.get("/", response_class=HTMLResponse)
        def index():
            return _PLACEHOLDER_PAGE

    return app


def app_from_files(campaign_path: str | Path, journal_path: str | Path,
                   static_dir: str | Path | None = None) -> FastAPI:
    campaign = load_campaign(campaign_path)
    corpus = ingest(campaign.corpus_path)
    design = load_design(campaign.design_path)
    return create_app(corpus, design, campaign, journal_path, static_dir)


def serve(campaign_path: str | Path, journal_path: str | Path, port: int,
          static_dir: str | Path | None = None) -> None:
    import uvicorn
    app = app_from_files(campaign_path, journal_path, static_dir)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="info")

import json
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String, Text, create_engine
from sqlalchemy.orm import Session, declarative_base, sessionmaker

from latentalign import __version__
from latentalign.aligner.pipeline import GenerationResult
from latentalign.config import settings
from latentalign.errors import MissingArtifactError
from latentalign.fileio import atomic_path

Base = declarative_base()


class Experiment(Base):
    __tablename__ = "experiments"

    id = Column(Integer, primary_key=True)
    subcommand = Column(String(32), nullable=False)
    version = Column(String(32), nullable=False)
    config = Column(Text, nullable=False)
    created_at = Column(DateTime, nullable=False)


class GenerationRun(Base):
    __tablename__ = "generation_runs"

    id = Column(Integer, primary_key=True)
    experiment_id = Column(Integer, ForeignKey("experiments.id"), nullable=False)
    run_index = Column(Integer, nullable=False, index=True)
    variant = Column(String(16), nullable=False)
    task = Column(String(16), nullable=False)
    seed = Column(Integer, nullable=False)
    condition_index = Column(Integer, nullable=True)
    class_id = Column(Integer, nullable=True)
    payload = Column(Text, nullable=False)
    runtime_ms = Column(Float, nullable=False)
    created_at = Column(DateTime, nullable=False)


def results_path(out_dir: Path) -> Path:
    return Path(out_dir) / settings.results_db_name


def get_engine(path: Path):
    return create_engine(f"sqlite:///{path}")


def get_session(engine) -> Session:
    SessionLocal = sessionmaker(autoflush=False, bind=engine)
    return SessionLocal()


def write_results(
    path: Path,
    echo: Dict[str, Any],
    subcommand: str,
    runs: Iterable[Tuple[int, GenerationResult]],
) -> Path:
    """Write one experiment and its runs, ordered by run index then variant, into a fresh store."""
    ordered = sorted(runs, key=lambda item: (item[0], item[1].variant))
    now = datetime.now(timezone.utc)
    with atomic_path(path) as tmp:
        os.unlink(tmp)
        engine = get_engine(tmp)
        try:
            Base.metadata.create_all(engine)
            db = get_session(engine)
            try:
                experiment = Experiment(
                    subcommand=subcommand,
                    version=__version__,
                    config=json.dumps(echo, sort_keys=True),
                    created_at=now,
                )
                db.add(experiment)
                db.flush()
                for run_index, result in ordered:
                    db.add(
                        GenerationRun(
                            experiment_id=experiment.id,
                            run_index=run_index,
                            variant=result.variant,
                            task=result.task,
                            seed=result.seed,
                            condition_index=result.condition_index,
                            class_id=result.class_id,
                            payload=result.payload_json(),
                            runtime_ms=result.duration_ms,
                            created_at=now,
                        )
                    )
                db.commit()
            finally:
                db.close()
        finally:
            engine.dispose()
    return Path(path)


def load_results(path: Path) -> Tuple[Dict[str, Any], List[Tuple[int, GenerationResult]]]:
    """Read back the config echo and the (run index, result) list of a store."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"Result store not found: {path} (run `latentalign run` first)")
    engine = get_engine(path)
    try:
        db = get_session(engine)
        try:
            experiment: Optional[Experiment] = db.query(Experiment).order_by(Experiment.id.desc()).first()
            echo = json.loads(experiment.config) if experiment else {}
            rows = db.query(GenerationRun).order_by(GenerationRun.run_index, GenerationRun.variant).all()
            runs = []
            for row in rows:
                result = GenerationResult.model_validate_json(row.payload)
                result.duration_ms = row.runtime_ms
                runs.append((row.run_index, result))
        finally:
            db.close()
    finally:
        engine.dispose()
    return echo, runs

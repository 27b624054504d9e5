"""
Run ledger

Every stage execution is recorded in ``ledger.sqlite`` inside the output
directory: the stage name, the fingerprint of its inputs, the fingerprints of
the artifacts it wrote and its status. A stage whose input fingerprint matches
its last completed run and whose outputs are unchanged is skipped.
"""
import enum
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

from sqlalchemy import DateTime, Enum, Integer, String, Text, create_engine, select
from sqlalchemy.orm import DeclarativeBase, Mapped, Session, mapped_column, sessionmaker

logger = logging.getLogger(__name__)

LEDGER_NAME = 'ledger.sqlite'


def utc_now():
    return datetime.now(timezone.utc)


class Base(DeclarativeBase):
    pass


class StageStatus(enum.Enum):
    """Status of a stage run."""
    running = "running"
    completed = "completed"
    failed = "failed"
    skipped = "skipped"


class StageRun(Base):
    """One execution of a pipeline stage."""
    __tablename__ = 'stage_runs'

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    stage: Mapped[str] = mapped_column(String(32), index=True)
    input_fingerprint: Mapped[str] = mapped_column(String(64))
    outputs: Mapped[str] = mapped_column(Text, default='{}')  # JSON: artifact name -> sha256
    status: Mapped[StageStatus] = mapped_column(Enum(StageStatus), default=StageStatus.running)
    message: Mapped[Optional[str]] = mapped_column(Text, nullable=True)
    started_at: Mapped[datetime] = mapped_column(DateTime(timezone=True), default=utc_now)
    finished_at: Mapped[Optional[datetime]] = mapped_column(DateTime(timezone=True), nullable=True)

    def get_outputs(self) -> Dict[str, str]:
        return json.loads(self.outputs or '{}')

    def set_outputs(self, outputs: Dict[str, str]):
        self.outputs = json.dumps(outputs, sort_keys=True)

    def __repr__(self):
        return f'<StageRun {self.stage} {self.status.value}>'


class Ledger:
    """Stage-run bookkeeping backed by a SQLite file in the output directory."""

    def __init__(self, out_dir):
        path = Path(out_dir) / LEDGER_NAME
        self.engine = create_engine(f'sqlite:///{path}')
        Base.metadata.create_all(self.engine)
        self._sessions = sessionmaker(self.engine, expire_on_commit=False)

    def session(self) -> Session:
        return self._sessions()

    def start(self, stage: str, input_fingerprint: str) -> int:
        with self.session() as session:
            run = StageRun(stage=stage, input_fingerprint=input_fingerprint)
            session.add(run)
            session.commit()
            return run.id

    def finish(self, run_id: int, status: StageStatus, outputs: Optional[Dict[str, str]] = None,
               message: Optional[str] = None) -> None:
        with self.session() as session:
            run = session.get(StageRun, run_id)
            run.status = status
            run.message = message
            run.finished_at = utc_now()
            if outputs is not None:
                run.set_outputs(outputs)
            session.commit()

    def last_completed(self, stage: str) -> Optional[StageRun]:
        query = (select(StageRun)
                 .where(StageRun.stage == stage, StageRun.status == StageStatus.completed)
                 .order_by(StageRun.id.desc())
                 .limit(1))
        with self.session() as session:
            return session.scalars(query).first()

    def history(self, stage: Optional[str] = None) -> List[StageRun]:
        query = select(StageRun).order_by(StageRun.id)
        if stage is not None:
            query = query.where(StageRun.stage == stage)
        with self.session() as session:
            return list(session.scalars(query))

    def dispose(self) -> None:
        self.engine.dispose()

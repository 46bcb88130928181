"""
Run store for command reports

Uses SQLAlchemy for ORM and supports both SQLite and PostgreSQL. Reports are
stored as the exact text that was emitted, so a stored run can be re-emitted
byte for byte.
"""

import hashlib
from datetime import datetime
from typing import Any, Dict, List, Optional

import pandas as pd
from sqlalchemy import Column, DateTime, Integer, String, Text, create_engine
from sqlalchemy.orm import Session, declarative_base, sessionmaker

from .config import DATABASE_URL, FORMAT_VERSION

Base = declarative_base()


class RunRecord(Base):
    """One solve, oracle, lattice or generate invocation"""
    __tablename__ = 'runs'

    id = Column(Integer, primary_key=True, autoincrement=True)
    command = Column(String(20), nullable=False, index=True)
    input_digest = Column(String(64), index=True)
    seed = Column(Integer)
    exit_code = Column(Integer, nullable=False)
    format_version = Column(Integer, default=FORMAT_VERSION)
    report = Column(Text, nullable=False)

    created_at = Column(DateTime, default=datetime.utcnow)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary, without the report body"""
        return {
            'id': self.id,
            'command': self.command,
            'input_digest': self.input_digest,
            'seed': self.seed,
            'exit_code': self.exit_code,
            'format_version': self.format_version,
            'created_at': self.created_at.isoformat() if self.created_at else None,
        }


def digest(text: str) -> str:
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


class RunStore:
    """Database manager for stored runs"""

    def __init__(self, database_url: str = None):
        self.database_url = database_url or DATABASE_URL
        self.engine = create_engine(self.database_url, echo=False)
        Base.metadata.create_all(self.engine)
        self.SessionLocal = sessionmaker(bind=self.engine)

    def get_session(self) -> Session:
        return self.SessionLocal()

    def save_run(self, command: str, report: str, exit_code: int,
                 input_digest: Optional[str] = None, seed: Optional[int] = None) -> RunRecord:
        session = self.get_session()
        try:
            run = RunRecord(
                command=command,
                report=report,
                exit_code=exit_code,
                input_digest=input_digest,
                seed=seed,
                format_version=FORMAT_VERSION,
            )
            session.add(run)
            session.commit()
            session.refresh(run)
            return run
        finally:
            session.close()

    def get_run(self, run_id: int) -> Optional[RunRecord]:
        session = self.get_session()
        try:
            return session.query(RunRecord).filter_by(id=run_id).first()
        finally:
            session.close()

    def list_runs(self, command: str = None) -> List[RunRecord]:
        """All runs in insertion order, optionally filtered by command"""
        session = self.get_session()
        try:
            query = session.query(RunRecord)
            if command:
                query = query.filter_by(command=command)
            return query.order_by(RunRecord.id).all()
        finally:
            session.close()

    def runs_frame(self, command: str = None) -> pd.DataFrame:
        columns = ['id', 'command', 'input_digest', 'seed', 'exit_code', 'format_version', 'created_at']
        return pd.DataFrame([run.to_dict() for run in self.list_runs(command)], columns=columns)

import logging
import os
from pathlib import Path

# Carregar variáveis de ambiente do .env (para desenvolvimento local)
try:
    from dotenv import load_dotenv
    env_path = Path(__file__).parent.parent / ".env"
    load_dotenv(env_path)
except ImportError:
    pass


LOG_FORMAT = "[%(asctime)s] %(message)s"
LOG_DATEFMT = "%H:%M:%S"


class Settings:
    """
    Configurações globais lidas de variáveis de ambiente (ou .env).
    Os valores são lidos dinamicamente (não no import time).
    """

    @staticmethod
    def _get(key: str, default: str = "") -> str:
        """Obtém valor das env vars"""
        return os.getenv(key, default)

    # === Execução ===
    @property
    def LOG_LEVEL(self) -> str:
        return self._get("SPDREDUCE_LOG_LEVEL", "INFO").upper()

    @property
    def N_JOBS(self) -> int:
        return int(self._get("SPDREDUCE_N_JOBS", "1"))

    @property
    def SEED(self) -> int:
        return int(self._get("SPDREDUCE_SEED", "0"))

    # === Pré-processamento ===
    @property
    def SHRINKAGE(self) -> float:
        return float(self._get("SPDREDUCE_SHRINKAGE", "0.01"))

    @property
    def FILTER_ORDER(self) -> int:
        return int(self._get("SPDREDUCE_FILTER_ORDER", "4"))

    @property
    def FILTER_FAMILY(self) -> str:
        return self._get("SPDREDUCE_FILTER_FAMILY", "butter")

    # === Artefactos ===
    @property
    def FORMAT_VERSION(self) -> str:
        return "spdreduce/1"


def configure_logging(level: str | None = None) -> None:
    """Instala o formato '[HH:MM:SS] mensagem' no logger raiz"""
    logging.basicConfig(
        level=getattr(logging, (level or settings.LOG_LEVEL).upper(), logging.INFO),
        format=LOG_FORMAT,
        datefmt=LOG_DATEFMT,
        force=True,
    )


# Instância global
settings = Settings()

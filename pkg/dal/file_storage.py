from pathlib import Path
from typing import List

from bll.exceptions import NotFoundError


class FileStorage:

    # Примітивне сховище: читає рядки конфігурації, записує текст звіту

    def __init__(self, file_path: str):
        self._path = Path(file_path)

    @property
    def path(self) -> Path:
        return self._path

    def load_lines(self) -> List[str]:
        if not self._path.exists():
            raise NotFoundError(f"Файл '{self._path}' не знайдено.")
        with self._path.open("r", encoding="utf-8") as f:
            return f.read().splitlines()

    def save_text(self, text: str) -> None:
        self._path.parent.mkdir(parents=True, exist_ok=True)
        with self._path.open("w", encoding="utf-8") as f:
            f.write(text)
            if text and not text.endswith("\n"):
                f.write("\n")

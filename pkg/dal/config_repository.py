from __future__ import annotations

from typing import Dict

from bll.exceptions import ValidationError
from bll.services import IConfigRepository
from .file_storage import FileStorage


class ConfigRepository(IConfigRepository):

    def __init__(self, storage: FileStorage):
        self._storage = storage

    def load(self) -> Dict[str, str]:
        values: Dict[str, str] = {}
        for number, line in enumerate(self._storage.load_lines(), start=1):
            # '#' починає коментар
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValidationError(f"Рядок {number}: очікується 'ключ = значення'.")
            key, value = (part.strip() for part in text.split("=", 1))
            if not key:
                raise ValidationError(f"Рядок {number}: порожній ключ.")
            if key in values:
                raise ValidationError(f"Рядок {number}: ключ '{key}' повторюється.")
            values[key] = value
        return values

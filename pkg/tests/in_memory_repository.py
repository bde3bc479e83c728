from typing import Dict, Optional

from bll.services import IConfigRepository


class InMemoryConfigRepository(IConfigRepository):

    def __init__(self, initial: Optional[Dict[str, str]] = None):
        self._values: Dict[str, str] = dict(initial) if initial is not None else {}

    def load(self) -> Dict[str, str]:
        # копія
        return dict(self._values)

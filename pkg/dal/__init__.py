from .file_storage import FileStorage
from .config_repository import ConfigRepository

import sys
from pathlib import Path

ROOT_DIR = Path(__file__).resolve().parents[1]
if str(ROOT_DIR) not in sys.path:
    sys.path.insert(0, str(ROOT_DIR))

import argparse
import logging
from typing import List, Optional

from dal import ConfigRepository, FileStorage
from bll.models import Command, EmitTarget, Mode
from bll.services import EXIT_CONFIG, AnalysisService, ConfigService
from bll.exceptions import SWebError


logger = logging.getLogger("sweb")


# ===================== АРГУМЕНТИ КОМАНДНОГО РЯДКА =====================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", default=None, help="звіт у форматі JSON")
    common.add_argument("--seed", type=int, help="зерно генератора точок вибірки")
    common.add_argument("--samples", type=int, help="кількість точок вибірки (не менше 20)")
    common.add_argument("--tol", type=float, help="поріг нуля")
    common.add_argument("--mode", choices=[m.value for m in Mode], help="exact або float")
    common.add_argument("--domain", help="область у вигляді [x0,x1]x[y0,y1]")
    common.add_argument("--out", help="записати звіт також у файл")
    common.add_argument("--timing", action="store_true", default=None, help="додати runtime_ms до звіту")
    common.add_argument("-v", "--verbose", action="store_true", help="докладний журнал у stderr")

    parser = argparse.ArgumentParser(
        prog="sweb",
        description="Ранг S-тканин Самуельсона: аналіз, виведення символьних об'єктів, перевірка форм.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    analyze = commands.add_parser(Command.ANALYZE.value, parents=[common], help="обчислити ранг і максимальність")
    analyze.add_argument("file", help="файл конфігурації key = value")

    derive = commands.add_parser(Command.DERIVE.value, parents=[common], help="вивести проміжні вирази")
    derive.add_argument("file", help="файл конфігурації key = value")
    derive.add_argument("--emit", required=True, choices=[t.value for t in EmitTarget])

    generate = commands.add_parser(Command.GENERATE.value, parents=[common], help="(f, b) з твірної функції")
    generate.add_argument("file", nargs="?", help="необов'язковий файл конфігурації")
    generate.add_argument("--phi", help="твірна функція Φ(x, y)")

    check = commands.add_parser(Command.CHECK_FORMS.value, parents=[common], help="перевірити S-умову для четвірки форм")
    check.add_argument("file", help="файл з ключами omega1..omega4")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    keys = ("json", "seed", "samples", "tol", "mode", "domain", "out", "timing", "emit", "phi")
    return {key: getattr(args, key, None) for key in keys}


# =============================== ЗАПУСК ===============================

def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    repo = ConfigRepository(FileStorage(args.file)) if args.file else None
    try:
        config = ConfigService(repo).load(Command(args.command), _overrides(args))
    except SWebError as error:
        print(f"Помилка конфігурації: {error}", file=sys.stderr)
        return EXIT_CONFIG

    logger.debug("Команда %s, режим %s, зерно %d", config.command.value, config.mode.value, config.seed)
    outcome = AnalysisService().run(config)
    if outcome.error:
        print(outcome.error, file=sys.stderr)
    if outcome.output:
        print(outcome.output)
        if config.out:
            FileStorage(config.out).save_text(outcome.output)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())

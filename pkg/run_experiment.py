import argparse
import asyncio
import json
import sys
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from loguru import logger
from pydantic import ValidationError

from monitored.base.base_task import TaskInput
from monitored.base.config import Command, EmitFormat, ExperimentConfig
from monitored.base.emit import emit_output
from monitored.base.errors import ConfigError, MonitoredError
from monitored.dynamics.trajectory import Scheme
from monitored.tasks import TASKS

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_ACCEPTANCE = 4

# 需要轨迹配置的命令，在解析时即完成校验
TRAJECTORY_COMMANDS = {Command.TRAJECTORY, Command.ENSEMBLE, Command.LINDBLAD, Command.COMPARE, Command.ORACLE}

# 可由命令行覆盖的配置键
CONFIG_FLAGS = ("command", "L", "J", "eta", "h", "gamma", "dt", "t_final", "n_traj", "workers", "master_seed", "R",
                "g0", "out", "format", "log_level", "scheme", "rho", "all_scenarios")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Monitored free-fermion chain toolkit", allow_abbrev=False)
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("--command", type=str, choices=[c.value for c in Command], default=None)
    parser.add_argument("--L", type=int, default=None)
    parser.add_argument("--J", type=float, default=None)
    parser.add_argument("--eta", type=float, default=None)
    parser.add_argument("--h", type=float, default=None)
    parser.add_argument("--gamma", type=float, default=None)
    parser.add_argument("--dt", type=float, default=None)
    parser.add_argument("--t-final", dest="t_final", type=float, default=None)
    parser.add_argument("--n-traj", dest="n_traj", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--master-seed", dest="master_seed", type=int, default=None)
    parser.add_argument("--R", type=float, default=None)
    parser.add_argument("--g0", type=float, default=None)
    parser.add_argument("--out", type=str, default=None, help="output path prefix")
    parser.add_argument("--format", type=str, choices=[f.value for f in EmitFormat], default=None)
    parser.add_argument("--log-level", dest="log_level", type=str, default=None)
    parser.add_argument("--scheme", type=str, choices=[s.value for s in Scheme], default=None)
    parser.add_argument("--rho", type=float, default=None)
    parser.add_argument("--all-scenarios", dest="all_scenarios", action="store_const", const=True, default=None)
    return parser


def _read_config_file(path: str) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Malformed JSON in {path}: {str(e)}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    return data


def parse_config(argv: Optional[List[str]] = None) -> ExperimentConfig:
    """默认值 < 配置文件 < 命令行参数"""
    args = build_parser().parse_args(argv)
    data: Dict[str, Any] = _read_config_file(args.config) if args.config else {}
    for key in CONFIG_FLAGS:
        value = getattr(args, key)
        if value is not None:
            data[key] = value

    try:
        config = ExperimentConfig.model_validate(data)
        if config.command in TRAJECTORY_COMMANDS:
            config.trajectory_config()
    except ValidationError as e:
        error = e.errors()[0]
        raise ConfigError(f"{error['msg']}", key_path=error.get("loc", ())) from e
    return config


def configure_logging(level: str = "INFO") -> None:
    logger.remove()
    logger.add(sys.stderr, level=level)


def dispatch(config: ExperimentConfig) -> int:
    """运行命令对应的Task并写出结果"""
    task = TASKS[config.command.value]()
    logger.info(f"Running {config.command.value} (seed {config.master_seed})")
    output = asyncio.run(task.process(TaskInput(config=config)))
    emit_output(output, config)
    if config.command == Command.COMPARE and not output.passed:
        logger.error(f"Acceptance check failed: {output.result}")
        return EXIT_ACCEPTANCE
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    try:
        config = parse_config(argv)
    except ConfigError as e:
        location = ".".join(str(k) for k in e.key_path) or "<root>"
        logger.error(f"Invalid configuration at {location}: {str(e)}")
        return EXIT_CONFIG
    except OSError as e:
        logger.error(f"Cannot read configuration: {str(e)}")
        return EXIT_IO

    configure_logging(config.log_level)
    try:
        return dispatch(config)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {str(e)}")
        return EXIT_CONFIG
    except MonitoredError as e:
        logger.error(f"{type(e).__name__}: {str(e)}")
        return EXIT_NUMERICAL
    except ValueError as e:
        logger.error(f"Invalid configuration: {str(e)}")
        return EXIT_CONFIG
    except OSError as e:
        logger.error(f"I/O failure: {str(e)}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

from .run_config import RunConfig
from .yaml_utils import parse_overrides, parse_run_config, read_run_file
from .cli import cmd_eval, cmd_flops, cmd_gen_data, cmd_gradcheck, cmd_train, main

"""Main entry point for reinforced intermediate-domain selection experiments."""
import argparse
import sys

from config.settings import LOG_FILE, LOG_LEVEL
from execution.commands import COMMANDS
from utils.logging_config import setup_logging


def parse_arguments(argv=None):
    """Parse command line arguments."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, default=None,
                        help='INI config file (defaults are used for missing keys)')
    common.add_argument('--seed', type=int, default=None,
                        help='Override the config seed')
    common.add_argument('--out', type=str, default=None,
                        help='Output directory (default: runs)')
    common.add_argument('--domains', type=str, default=None,
                        help='Domains CSV to use instead of the synthetic generator')
    common.add_argument('--log-level', type=str, default=LOG_LEVEL,
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='Logging level')
    common.add_argument('--log-file', type=str, default=LOG_FILE,
                        help='Log file (empty string disables file logging)')

    parser = argparse.ArgumentParser(description='Reinforced intermediate-domain selection for '
                                                 'continuous domain adaptation')
    subparsers = parser.add_subparsers(dest='command', required=True)

    subparsers.add_parser('generate', parents=[common], help='Write synthetic domains to CSV')
    subparsers.add_parser('train', parents=[common], help='Run joint training')

    for name, help_text in (('eval', 'Print target accuracy of a checkpoint'),
                            ('path', 'Print the extracted transfer path'),
                            ('plot-features', 'Plot projected specific and invariant features')):
        sub = subparsers.add_parser(name, parents=[common], help=help_text)
        sub.add_argument('--checkpoint', type=str, default=None,
                         help='Checkpoint file (default: <out>/model.ckpt)')

    for name, help_text in (('plot-selection', 'Selection-order heatmap'),
                            ('plot-reward', 'Mean cumulative reward curves')):
        sub = subparsers.add_parser(name, parents=[common], help=help_text)
        sub.add_argument('--history', type=str, nargs='+', default=None,
                         help='History JSONL file(s) (default: <out>/history.jsonl)')

    subparsers.add_parser('ablation', parents=[common], help='Compare the three training modes')
    sweep = subparsers.add_parser('pool-sweep', parents=[common], help='Accuracy across pool sizes')
    sweep.add_argument('--pool-sizes', type=int, nargs='+', default=[3, 6, 9],
                       help='Numbers of intermediate domains to try')

    return parser.parse_args(argv)


def main(argv=None):
    """Dispatch the requested subcommand."""
    args = parse_arguments(argv)

    # Set up logging
    logger = setup_logging(level=args.log_level, log_file=args.log_file)
    logger.info(f"Running '{args.command}'")

    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())

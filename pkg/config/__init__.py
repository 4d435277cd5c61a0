"""
Q_Bridge - Configuration Management
"""

import os
import yaml
from pathlib import Path
from typing import Any, Dict, Optional
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

CONFIG_PATH = Path(__file__).parent.parent / 'config' / 'config.yaml'


def load_config(path: Path = CONFIG_PATH) -> Dict[str, Any]:
    """Load configuration from YAML and environment variables"""

    with open(path, 'r') as f:
        config = yaml.safe_load(f) or {}

    app = config.setdefault('app', {})
    app['log_level'] = os.getenv('LOG_LEVEL', app.get('log_level', 'INFO'))
    app['output_dir'] = os.getenv('QBRIDGE_OUTPUT_DIR', app.get('output_dir', './output'))
    app['log_dir'] = os.getenv('QBRIDGE_LOG_DIR') or app.get('log_dir')

    run = config.setdefault('run', {})
    if os.getenv('QBRIDGE_WORKERS'):
        run['workers'] = int(os.getenv('QBRIDGE_WORKERS'))

    config.setdefault('presets', {})
    return config


def get_preset(name: str, config: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Defaults of one scenario preset"""
    config = load_config() if config is None else config
    presets = config.get('presets', {})
    if name not in presets:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(presets)}")
    return dict(presets[name])

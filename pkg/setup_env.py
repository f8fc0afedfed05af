#!/usr/bin/env python3
"""
Environment Setup Script for the thermal-light QRNG simulator
Writes a .env template, checks that the numeric stack imports and reports
which settings come from the environment
"""

import importlib
import os

from dotenv import load_dotenv

from experiment_config import ENV_KEYS, ConfigError, ExperimentConfig, resolve_config

REQUIRED_PACKAGES = ["numpy", "scipy", "dotenv", "pytest"]


def create_env_template(path: str = '.env.template'):
    """Create a .env.template file with the built-in defaults"""
    defaults = ExperimentConfig().to_dict()
    lines = ["# Thermal-light QRNG simulator configuration"]
    for key, variable in ENV_KEYS.items():
        lines.append(f"{variable}={defaults[key]}")
    with open(path, 'w') as f:
        f.write("\n".join(lines) + "\n")
    print(f"✅ Created {path} file")


def check_packages() -> bool:
    """Check that every runtime package can be imported"""
    missing = []
    for name in REQUIRED_PACKAGES:
        try:
            importlib.import_module(name)
        except ImportError:
            missing.append(name)

    if missing:
        print("❌ Missing packages (pip install -r requirements.txt):")
        for name in missing:
            print(f"   - {name}")
        return False
    print("✅ All required packages are importable")
    return True


def check_environment() -> bool:
    """Report which settings are taken from the environment and validate them"""
    for key, variable in ENV_KEYS.items():
        value = os.environ.get(variable)
        print(f"   {variable}: {value if value else '(default)'}")
    try:
        config = resolve_config()
    except ConfigError as e:
        print(f"❌ Invalid setting {e.key}: {e}")
        return False
    print(f"✅ Configuration is valid (seed={config.seed}, shots={config.shots}, workers={config.workers})")
    return True


def main():
    """Main setup function"""
    print("🚀 Thermal-light QRNG simulator - Environment Setup")
    print("=" * 50)

    if not os.path.exists('.env.template'):
        create_env_template()
        print("\n📝 Copy .env.template to .env to override the defaults")

    print("\n🔍 Checking packages...")
    packages_ok = check_packages()

    load_dotenv()
    print("\n🔍 Checking environment variables...")
    env_ok = check_environment()

    if packages_ok and env_ok:
        print("\n✅ Environment is ready")
        print("\n📋 Next steps:")
        print("1. python app.py single --n-eve 0 --n-alice 0")
        print("2. python app.py sweep-table2")
        print("3. pytest")
    else:
        print("\n❌ Please fix the problems above before running experiments")


if __name__ == "__main__":
    main()

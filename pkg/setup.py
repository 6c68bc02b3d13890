#!/usr/bin/env python3
"""
Setup script for Seasonal Analysis
Creates the output directory and the initial configuration.
"""

import json
from pathlib import Path

from modules.run_config import default_config


def create_directories(config):
    """Create necessary directories."""
    directory = config["run"]["output_dir"]
    Path(directory).mkdir(parents=True, exist_ok=True)
    print(f"Created directory: {directory}")


def create_default_config(config):
    """Write config.json unless one already exists."""
    path = Path("config.json")
    if path.exists():
        print("Keeping existing configuration: config.json")
        return
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2)
        f.write("\n")
    print("Created default configuration: config.json")


def main():
    """Main setup function."""
    print("Seasonal Analysis Setup")
    print("=" * 23)

    config = default_config()

    print("\nCreating directories...")
    create_directories(config)

    print("\nCreating configuration...")
    create_default_config(config)

    print("\nSetup complete!")
    print("\nNext steps:")
    print("1. Edit config.json to change model constants or grid sizes")
    print("2. Run: python main.py synthesize --kind ess")
    print("3. Run: python main.py certify --kind coop")


if __name__ == "__main__":
    main()

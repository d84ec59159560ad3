"""
Command-line entry point.

Run:
  python main.py --config config/pipeline.yaml run
"""
from wifi_distance.cli.app import main

if __name__ == "__main__":
    main()

"""
Main entry point for experiment_utility package
"""

from .runner import main

if __name__ == "__main__":
    main()

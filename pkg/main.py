"""
Main entrypoint for the magnon memory tools.
"""
from cli import main

if __name__ == "__main__":
    main()

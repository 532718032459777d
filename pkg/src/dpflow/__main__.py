"""Allow ``python -m dpflow`` to behave like the installed entry point."""

from .cli_io import main

if __name__ == "__main__":
    main()

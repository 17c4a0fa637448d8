import sys

from singular_functions.cli import main


if __name__ == "__main__":
    sys.exit(main())

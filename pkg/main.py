import sys

from app.core.app import create_runner


def main(argv: list[str] | None = None) -> int:
    return create_runner().run(argv)


if __name__ == "__main__":
    sys.exit(main())

import sys

from contraction_cert.main import main  # expone la CLI: python main.py <comando> ...

if __name__ == "__main__":
    sys.exit(main())

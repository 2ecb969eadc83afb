# drfer/__main__.py
from .main import main  # main() already calls cli()

if __name__ == "__main__":
    main()

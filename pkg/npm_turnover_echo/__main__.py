import sys

from npm_turnover_echo.cli import main

sys.exit(main())

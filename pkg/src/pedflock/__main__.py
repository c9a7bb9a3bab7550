from pedflock.cli import main

raise SystemExit(main())

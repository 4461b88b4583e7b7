from tinylcn.cli import main

main()

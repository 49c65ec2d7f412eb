from kinshape.cli import main

main()

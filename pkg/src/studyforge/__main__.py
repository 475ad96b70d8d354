from studyforge.cli import main

main()

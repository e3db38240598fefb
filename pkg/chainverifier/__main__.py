from chainverifier.main import main

main()

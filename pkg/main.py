from slip_perception import main

if __name__ == "__main__":
    main()

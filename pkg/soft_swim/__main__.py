from soft_swim.cli import app

if __name__ == "__main__":
    app()

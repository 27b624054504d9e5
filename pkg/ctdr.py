from dotenv import load_dotenv

from app import create_cli

# Load environment variables (CTDR_* config overrides may live in .env)
load_dotenv()

cli = create_cli()

if __name__ == '__main__':
    cli()

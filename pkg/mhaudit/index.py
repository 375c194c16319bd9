from dotenv import load_dotenv

# Load .env from the working directory before settings are read
load_dotenv()

import typer

from mhaudit.domains.fixtures.commands import app as fixtures_app
from mhaudit.pipeline.commands import register as register_pipeline

app = typer.Typer(
    name="mhaudit",
    help="Privacy audit of mHealth app corpora.",
    no_args_is_help=True,
    add_completion=False,
)

# Register commands
register_pipeline(app)
app.add_typer(fixtures_app, name="fixtures")

# python -m mhaudit.index run --manifest corpus/manifest.json
if __name__ == "__main__":
    app()

"""ASGI entry point for serverless deployment and local `uvicorn api.index:app`."""

import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from backend.main import app  # noqa: E402

if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host=os.getenv("BSFLAB_HOST", "127.0.0.1"), port=int(os.getenv("BSFLAB_PORT", "8000")))

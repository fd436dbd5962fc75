"""Spawn a real `qdh serve` process for CLI and crash-recovery tests."""

from __future__ import annotations

import os
import signal
import socket
import subprocess
import sys
import time
from pathlib import Path
from typing import Optional

import httpx


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class LiveServer:
    def __init__(self, data_dir: Path, *, admins: tuple[str, ...] = ("root-admin",),
                 env_extra: Optional[dict[str, str]] = None, port: Optional[int] = None):
        self.data_dir = Path(data_dir)
        self.admins = admins
        self.port = port or free_port()
        self.base = f"http://127.0.0.1:{self.port}"
        self.env_extra = env_extra or {}
        self.proc: Optional[subprocess.Popen] = None

    def start(self, wait: bool = True) -> "LiveServer":
        cmd = [sys.executable, "-m", "qdh.cli", "serve",
               "--data-dir", str(self.data_dir),
               "--port", str(self.port)]
        for admin in self.admins:
            cmd += ["--admin", admin]
        env = {**os.environ, **self.env_extra}
        self.proc = subprocess.Popen(cmd, env=env, stdout=subprocess.DEVNULL,
                                     stderr=subprocess.DEVNULL)
        if wait:
            self.wait_ready()
        return self

    def wait_ready(self, timeout: float = 30.0) -> None:
        deadline = time.time() + timeout
        while time.time() < deadline:
            if self.proc and self.proc.poll() is not None:
                raise RuntimeError(f"server exited early: {self.proc.returncode}")
            try:
                resp = httpx.get(f"{self.base}/v1/samples", timeout=1.0)
                if resp.status_code in (200, 401):
                    return
            except httpx.HTTPError:
                pass
            time.sleep(0.05)
        raise RuntimeError("server did not become ready")

    def wait_exit(self, timeout: float = 30.0) -> int:
        assert self.proc is not None
        return self.proc.wait(timeout=timeout)

    def kill9(self) -> None:
        if self.proc and self.proc.poll() is None:
            os.kill(self.proc.pid, signal.SIGKILL)
            self.proc.wait(timeout=10)

    def stop(self) -> None:
        if self.proc and self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self.kill9()

    def issue_token(self, user: str) -> str:
        resp = httpx.post(f"{self.base}/provider/issue", json={"user_id": user},
                          timeout=5.0)
        resp.raise_for_status()
        return resp.json()["token"]

    def api(self, method: str, path: str, user: str, **kwargs) -> httpx.Response:
        headers = kwargs.pop("headers", {})
        headers["Authorization"] = f"Bearer {self.issue_token(user)}"
        return httpx.request(method, f"{self.base}{path}", headers=headers,
                             timeout=30.0, **kwargs)


def run_cli(args: list[str], *, endpoint: str, config_dir: Path,
            token: Optional[str] = None) -> subprocess.CompletedProcess:
    env = {**os.environ,
           "QDH_CONFIG": str(config_dir / "config"),
           "QDH_ENDPOINT": endpoint}
    if token is not None:
        env["QDH_TOKEN"] = token
    return subprocess.run([sys.executable, "-m", "qdh.cli", *args],
                          env=env, capture_output=True, text=True, timeout=120)

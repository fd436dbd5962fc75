/** Browser bootstrap: dev-mode login against the hub's embedded provider,
 * then mount the editor. */

import { HubClient, loginMock } from "./api.js";
import { EditorSession } from "./session.js";
import { EditorApp } from "./ui.js";

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const params = new URLSearchParams(window.location.search);
  const base = params.get("hub") ?? "http://127.0.0.1:8080";
  const user = params.get("user") ?? prompt("user id", "dana") ?? "dana";

  const token = await loginMock(base, user);
  const client = new HubClient(base, token);
  const session = new EditorSession(client, {
    sampleId: `draft-${Date.now().toString(36)}`,
    name: "untitled sample",
  });
  await new EditorApp(root, session).start();
}

void boot();

import { readFileSync } from "node:fs";
import { join } from "node:path";
import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { mount, ChatApp } from "../src/app.js";
import { GATED_OFF_NOTICE } from "../src/ui.js";
import { defaultScript, FakeServer } from "./fake_server.js";
import { mountDom } from "./dom.js";

let server: FakeServer;
let app: ChatApp;

function el<T extends HTMLElement>(id: string): T {
  return document.querySelector<T>(`#${id}`)!;
}

async function send(text: string): Promise<void> {
  el<HTMLInputElement>("chat-input").value = text;
  await app.send();
}

beforeEach(() => {
  mountDom();
  server = new FakeServer(defaultScript());
  vi.stubGlobal("fetch", server.fetch);
  app = mount(document);
});

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("scripted browser flow", () => {
  it("start -> 3 turns -> warn banner -> close locks input", async () => {
    await app.start();
    let bubbles = document.querySelectorAll(".bubble");
    expect(bubbles).toHaveLength(1);
    expect(bubbles[0].textContent).toContain("confidential");
    expect(el<HTMLInputElement>("chat-input").disabled).toBe(false);

    await send("I slept badly and feel low.");
    await send("I feel exhausted all day.");
    await send("Thanks for listening to me.");

    // One counselor bubble per turn, each with a skill badge.
    const counselorBubbles = [...document.querySelectorAll(".bubble.counselor")];
    // opening + 3 replies
    expect(counselorBubbles).toHaveLength(4);
    const badged = counselorBubbles.slice(1);
    for (const bubble of badged) {
      expect(bubble.querySelector(".skill-badge")).not.toBeNull();
    }
    expect(badged[0].querySelector(".skill-badge")!.textContent).toBe("direct_guidance");

    // Third turn warned: banner visible before the next input.
    const banner = el("banner");
    expect(banner.className).toContain("visible");
    expect(banner.textContent).toContain("coming to an end");
    expect(el<HTMLInputElement>("chat-input").disabled).toBe(false);

    await app.end();
    expect(el<HTMLInputElement>("chat-input").disabled).toBe(true);
    expect(el<HTMLButtonElement>("send-btn").disabled).toBe(true);
    expect(el("banner").textContent).toContain("Session closed");
  });

  it("sending one message renders exactly one counselor bubble with a badge", async () => {
    await app.start();
    await send("I slept badly.");
    const clientBubbles = document.querySelectorAll(".bubble.client");
    const counselorBubbles = document.querySelectorAll(".bubble.counselor .skill-badge");
    expect(clientBubbles).toHaveLength(1);
    expect(counselorBubbles).toHaveLength(1);
  });

  it("gated turn shows the no-retrieval notice", async () => {
    await app.start();
    await send("I slept badly.");
    expect(el("knowledge-panel").textContent).toContain("drink coffee");
    await send("I feel exhausted.");
    expect(el("knowledge-panel").textContent).toContain(GATED_OFF_NOTICE);
  });

  it("panels reflect the most recent turn", async () => {
    await app.start();
    await send("I slept badly.");
    expect(el("stamp-panel").textContent).toContain("awake and energetic");
    const recording = el("recording-panel");
    expect(recording.querySelectorAll("details")).toHaveLength(6);
    expect(recording.textContent).toContain("Countertransference");
  });

  it("409 on a closed session shows a banner and preserves input", async () => {
    await app.start();
    await send("I slept badly.");
    server.status = "closed";
    el<HTMLInputElement>("chat-input").value = "one more thing";
    await app.send();
    expect(el("error-banner").textContent).toContain("409");
    expect(el<HTMLInputElement>("chat-input").value).toBe("one more thing");
  });

  it("502 backend failure is non-destructive", async () => {
    await app.start();
    server.failNextTurnWith = 502;
    el<HTMLInputElement>("chat-input").value = "hello?";
    await app.send();
    expect(el("error-banner").textContent).toContain("502");
    expect(el<HTMLInputElement>("chat-input").value).toBe("hello?");
    // The log is unchanged, so only the opening bubble renders.
    expect(document.querySelectorAll(".bubble")).toHaveLength(1);
    // Retry works.
    await send("hello again");
    expect(document.querySelectorAll(".bubble")).toHaveLength(3);
  });

  it("input is disabled exactly when the session is closed", async () => {
    await app.start();
    await send("I slept badly.");
    expect(el<HTMLInputElement>("chat-input").disabled).toBe(false);
    await send("I feel exhausted.");
    await send("Thanks for listening.");
    expect(el<HTMLInputElement>("chat-input").disabled).toBe(false); // warned, not closed
    await app.end();
    expect(el<HTMLInputElement>("chat-input").disabled).toBe(true);
  });

  it("reload rebuilds the identical view from the event log", async () => {
    await app.start();
    await send("I slept badly.");
    await send("I feel exhausted.");
    const before = el("messages").innerHTML;
    // Fresh app instance over the same server state (i.e. a page reload).
    mountDom();
    const reloaded = mount(document);
    reloaded.sessionId = server.sessionId;
    await reloaded.refresh();
    expect(el("messages").innerHTML).toBe(before);
  });
});

describe("index.html contract", () => {
  it("declares every element id the app binds to", () => {
    const html = readFileSync(join(process.cwd(), "index.html"), "utf-8");
    for (const id of [
      "messages",
      "banner",
      "error-banner",
      "stamp-panel",
      "knowledge-panel",
      "recording-panel",
      "chat-input",
      "send-btn",
      "start-btn",
      "end-btn",
    ]) {
      expect(html).toContain(`id="${id}"`);
    }
  });
});

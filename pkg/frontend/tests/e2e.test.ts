/** End-to-end: drives the review flow against the real service running on
 * a freshly generated synthetic corpus. The session layer is exactly what
 * the DOM handlers call, so this exercises upload -> query -> select ->
 * edit -> validate and the threshold re-query behaviour for real.
 */

import { execFile, spawn, type ChildProcess } from "node:child_process";
import { mkdtemp } from "node:fs/promises";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ReviewSession } from "../src/session.js";

const execFileAsync = promisify(execFile);

const SPECIALTY = "Synthetic";

/** ASCII PGM of a bright rectangle on a dark background, like the corpus shapes. */
function rectanglePgm(dx: number, dy: number, scale = 1.0, size = 96): Uint8Array {
  const cx = Math.floor(size / 2) + dx;
  const cy = Math.floor(size / 2) + dy;
  const hw = 26.0 * scale;
  const hh = 14.0 * scale;
  const rows: string[] = [];
  for (let y = 0; y < size; y++) {
    const row: number[] = [];
    for (let x = 0; x < size; x++) {
      const inside = Math.abs(x - cx) <= hw && Math.abs(y - cy) <= hh;
      row.push(inside ? 220 : 40);
    }
    rows.push(row.join(" "));
  }
  return new TextEncoder().encode(`P2\n${size} ${size}\n255\n${rows.join("\n")}\n`);
}

async function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const server = createServer();
    server.listen(0, "127.0.0.1", () => {
      const address = server.address();
      if (address === null || typeof address === "string") {
        reject(new Error("no port assigned"));
        return;
      }
      server.close(() => resolve(address.port));
    });
    server.on("error", reject);
  });
}

async function waitUntilUp(baseUrl: string, timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${baseUrl}/api/specialties`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 150));
  }
  throw new Error(`service at ${baseUrl} never came up`);
}

let server: ChildProcess | null = null;
let baseUrl = "";

beforeAll(async () => {
  const work = await mkdtemp(join(tmpdir(), "hannot-ui-e2e-"));
  const shapes = join(work, "shapes");
  const corpus = join(work, "corpus");
  await execFileAsync("python3", ["-m", "hannot.cli", "synth", shapes, "--per-class", "6", "--seed", "7"]);
  await execFileAsync("python3", [
    "-m", "hannot.cli", "ingest", shapes, "--corpus", corpus, "--specialty", SPECIALTY,
  ]);

  const port = await freePort();
  baseUrl = `http://127.0.0.1:${port}`;
  server = spawn(
    "python3",
    ["-m", "hannot.cli", "serve", "--corpus", corpus, "--listen", `127.0.0.1:${port}`],
    { stdio: "ignore" },
  );
  await waitUntilUp(baseUrl);
}, 120_000);

afterAll(() => {
  server?.kill("SIGINT");
});

describe("review flow against the live service", () => {
  it("loads the specialty hierarchy from the corpus", async () => {
    const api = new ApiClient(baseUrl);
    const tree = await api.specialties();
    expect(tree.map((s) => s.name)).toContain(SPECIALTY);
    const classes = tree.find((s) => s.name === SPECIALTY)?.classes.map((c) => c.name) ?? [];
    expect(classes).toEqual(["CIRCLE", "CROSS", "RECTANGLE"]);
  });

  it("upload -> select -> edit -> validate stores the edited draft", async () => {
    const api = new ApiClient(baseUrl);
    const session = new ReviewSession(api);
    session.setFilter(SPECIALTY);

    // dx=3 is outside the corpus jitter range: similar but never identical
    expect(await session.upload(rectanglePgm(3, 1), "e2e-rect.pgm")).toBe(true);
    expect(await session.runQuery()).toBe(true);
    expect(session.results.length).toBeGreaterThan(0);

    const top = session.results[0]!;
    expect(top.distance).toBeGreaterThan(0);
    expect(top.accepted).toBe(true);
    expect(top.annotations[0]?.class_name).toBe("RECTANGLE");

    session.select(top.image_id);
    expect(session.draftKeywords).toContain("rectangular implant");

    session.setDraft(["validated via e2e", "second keyword"]);
    expect(session.canValidate).toBe(true);
    const stored = await session.validate("dr-e2e");
    expect(stored).not.toBeNull();
    expect(stored!.keywords).toEqual(["validated via e2e", "second keyword"]);
    expect(stored!.physician_id).toBe("dr-e2e");
    expect(stored!.class_name).toBe("RECTANGLE");

    // persisted server-side, visible without any reload
    const records = await api.annotationsFor(session.imageId!);
    expect(records.some((r) => r.keywords.includes("validated via e2e"))).toBe(true);

    await session.runQuery();
    const mine = session.results.find((r) => r.image_id === session.imageId);
    expect(mine).toBeDefined();
    expect(mine!.distance).toBe(0);
    expect(mine!.annotations.some((r) => r.physician_id === "dr-e2e")).toBe(true);
  });

  it("threshold changes flip accepted badges via re-query, same session", async () => {
    const api = new ApiClient(baseUrl);
    const session = new ReviewSession(api);
    session.setFilter(SPECIALTY);

    expect(await session.upload(rectanglePgm(-3, 2, 1.0), "e2e-rect2.pgm")).toBe(true);
    expect(await session.runQuery()).toBe(true);
    const idsBefore = session.results.map((r) => r.image_id);
    const top = session.results[0]!;
    expect(top.distance).toBeGreaterThan(0);
    expect(top.accepted).toBe(true);

    await session.setThreshold(0);
    expect(session.results.map((r) => r.image_id)).toEqual(idsBefore);
    expect(session.results.every((r) => !r.accepted)).toBe(true);
    expect(session.votes).toEqual([]);

    await session.setThreshold(32);
    expect(session.results[0]!.accepted).toBe(true);
    expect(session.votes.length).toBeGreaterThan(0);
  });

  it("duplicate upload resolves to the existing image id", async () => {
    const api = new ApiClient(baseUrl);
    const session = new ReviewSession(api);
    const bytes = rectanglePgm(3, 1);
    await session.upload(bytes, "same-bytes-as-flow-test.pgm");
    expect(session.duplicateOf).not.toBeNull();
  });
});

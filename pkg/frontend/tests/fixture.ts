/** Test fixture: a real service + stub generation backend on loopback.
 *
 * The UI package touches the service exclusively over HTTP, so the tests do
 * the same — both servers run as child processes of the installed CLI, and
 * every assertion goes through `ApiClient`.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { createServer, type AddressInfo } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { PNG } from "pngjs";

import { ApiClient } from "../src/api";

/** A body fit for the service's default test model (96x128 frame). */
export const FIXTURE_FIT: Record<string, unknown> = {
  beta: [0.0, 0.0, 0.0, 0.0],
  theta: [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
  camera: {
    kind: "pinhole",
    fx: 164.84848015892945,
    fy: 164.84848015892945,
    cx: 48.0,
    cy: 64.0,
    rotation: [
      [1.0, 0.0, 0.0],
      [0.0, -1.0, 0.0],
      [0.0, 0.0, -1.0],
    ],
    translation: [0.0006651580333709717, 0.8750000242143869, 2.5006290711462498],
  },
  image_size: [96, 128],
};

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const server = createServer();
    server.listen(0, "127.0.0.1", () => {
      const { port } = server.address() as AddressInfo;
      server.close((err) => (err ? reject(err) : resolve(port)));
    });
  });
}

interface Managed {
  child: ChildProcess;
  stderr: { text: string };
}

function launch(args: string[], env: NodeJS.ProcessEnv): Managed {
  const child = spawn("reshapekit", args, {
    env,
    stdio: ["ignore", "ignore", "pipe"],
  });
  const stderr = { text: "" };
  child.stderr!.on("data", (chunk: Buffer) => {
    stderr.text += chunk.toString();
  });
  return { child, stderr };
}

async function waitHealthy(url: string, managed: Managed, timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (managed.child.exitCode !== null) {
      throw new Error(`server exited with ${managed.child.exitCode}:\n${managed.stderr.text}`);
    }
    try {
      const response = await fetch(url);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await sleep(100);
  }
  throw new Error(`timed out waiting for ${url}\n${managed.stderr.text}`);
}

function terminate(managed: Managed): Promise<void> {
  return new Promise((resolve) => {
    if (managed.child.exitCode !== null) return resolve();
    managed.child.once("exit", () => resolve());
    managed.child.kill("SIGTERM");
    setTimeout(() => managed.child.kill("SIGKILL"), 3000).unref();
  });
}

export interface Stack {
  api: ApiClient;
  serviceUrl: string;
  stubUrl: string;
  stop(): Promise<void>;
}

/** Start stub backend + service wired together; returns once both are live. */
export async function startStack(): Promise<Stack> {
  const stubPort = await freePort();
  const servicePort = await freePort();
  const dataDir = mkdtempSync(join(tmpdir(), "reshapekit-ui-"));
  const stubUrl = `http://127.0.0.1:${stubPort}`;
  const serviceUrl = `http://127.0.0.1:${servicePort}`;

  const stub = launch(["backend-stub", "--host", "127.0.0.1", "--port", String(stubPort)], {
    ...process.env,
  });
  const service = launch(
    [
      "serve",
      "--host",
      "127.0.0.1",
      "--port",
      String(servicePort),
      "--backend-url",
      stubUrl,
    ],
    { ...process.env, RESHAPEKIT_DATA_DIR: dataDir },
  );

  try {
    await waitHealthy(`${stubUrl}/healthz`, stub);
    await waitHealthy(`${serviceUrl}/healthz`, service);
  } catch (error) {
    await terminate(service);
    await terminate(stub);
    rmSync(dataDir, { recursive: true, force: true });
    throw error;
  }

  return {
    api: new ApiClient(serviceUrl),
    serviceUrl,
    stubUrl,
    async stop() {
      await terminate(service);
      await terminate(stub);
      rmSync(dataDir, { recursive: true, force: true });
    },
  };
}

/** A plausible reference photo: light backdrop with a darker figure. */
export function referencePng(width = 96, height = 128): Uint8Array {
  const png = new PNG({ width, height });
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const o = (y * width + x) * 4;
      const figure =
        x > width * 0.35 && x < width * 0.65 && y > height * 0.15 && y < height * 0.9;
      const level = figure ? 70 : 200;
      png.data[o] = level;
      png.data[o + 1] = level;
      png.data[o + 2] = figure ? 90 : 200;
      png.data[o + 3] = 255;
    }
  }
  return new Uint8Array(PNG.sync.write(png));
}

export function decodePng(bytes: Uint8Array): {
  width: number;
  height: number;
  data: Uint8Array;
} {
  const png = PNG.sync.read(Buffer.from(bytes));
  return { width: png.width, height: png.height, data: new Uint8Array(png.data) };
}

export interface FixtureProject {
  projectId: string;
  sliderState: Record<string, number>;
}

/** Create a project and import the fixture fit, all over HTTP. */
export async function createFixtureProject(api: ApiClient): Promise<FixtureProject> {
  const projectId = await api.createProject(referencePng());
  const fit = await api.importFit(projectId, FIXTURE_FIT);
  return { projectId, sliderState: fit.slider_state };
}

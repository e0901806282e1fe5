import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api";
import { Session, sliderRanges } from "../src/state";
import { createFixtureProject, referencePng, startStack, type Stack } from "./fixture";

let stack: Stack;

beforeAll(async () => {
  stack = await startStack();
});

afterAll(async () => {
  await stack.stop();
});

describe("binding a project", () => {
  it("shows slider values equal to the service's slider_state", async () => {
    const { projectId } = await createFixtureProject(stack.api);
    const session = await Session.bind(stack.api, projectId);

    const history = await stack.api.getHistory(projectId);
    const latest = history.entries[history.entries.length - 1].slider_state;
    const map = await stack.api.getMap();

    expect(Object.keys(session.values).sort()).toEqual([...map.names].sort());
    for (const name of map.names) {
      expect(session.values[name]).toBe(latest[name]);
    }
  });

  it("derives slider ranges from the map's corpus min/max with 20% padding", async () => {
    const map = await stack.api.getMap();
    const ranges = sliderRanges(map);
    map.names.forEach((name, i) => {
      const span = map.attr_max[i] - map.attr_min[i];
      expect(ranges[name].min).toBeCloseTo(map.attr_min[i] - 0.2 * span, 10);
      expect(ranges[name].max).toBeCloseTo(map.attr_max[i] + 0.2 * span, 10);
      expect(span).toBeGreaterThan(0);
    });
  });

  it("starts every slider inside its advertised range", async () => {
    const { projectId } = await createFixtureProject(stack.api);
    const session = await Session.bind(stack.api, projectId);
    for (const slider of session.sliders()) {
      expect(slider.value).toBeGreaterThanOrEqual(slider.min);
      expect(slider.value).toBeLessThanOrEqual(slider.max);
      expect(slider.dirty).toBe(false);
      expect(slider.error).toBeNull();
    }
  });

  it("rejects binding a project with no fit", async () => {
    const projectId = await stack.api.createProject(referencePng());
    await expect(Session.bind(stack.api, projectId)).rejects.toThrow(/no fit/);
  });

  it("surfaces a 404 for a missing project", async () => {
    await expect(Session.bind(stack.api, "no-such-project")).rejects.toMatchObject({
      name: "ApiError",
      status: 404,
    });
  });

  it("fails with a transport error (not ApiError) when the service is down", async () => {
    const dead = new ApiClient("http://127.0.0.1:9");
    const error = await Session.bind(dead, "whatever").catch((e) => e);
    expect(error).toBeInstanceOf(Error);
    expect(error).not.toBeInstanceOf(ApiError);
  });
});

describe("slider edits", () => {
  it("round-trips an edit and reconciles with the measured state", async () => {
    const { projectId } = await createFixtureProject(stack.api);
    const session = await Session.bind(stack.api, projectId, 20);

    const before = session.values["weight"];
    session.setSlider("weight", before + 6);
    expect(session.sliders().find((s) => s.name === "weight")!.dirty).toBe(true);

    await session.settle();

    const history = await stack.api.getHistory(projectId);
    expect(history.entries.length).toBe(2);
    // slider_state reports every measured attribute; the session mirrors
    // the ones the map advertises as sliders.
    const serverState = history.entries[1].slider_state;
    for (const name of Object.keys(session.values)) {
      expect(session.values[name]).toBe(serverState[name]);
    }
    expect(session.values["weight"]).toBeGreaterThan(before + 4);
    expect(session.historyIndex).toBe(1);
    expect(session.sliders().every((s) => !s.dirty)).toBe(true);
  });

  it("is refresh-safe: a new session reproduces the edited state", async () => {
    const { projectId } = await createFixtureProject(stack.api);
    const first = await Session.bind(stack.api, projectId, 20);
    first.setSlider("weight", first.values["weight"] + 5);
    await first.settle();

    const second = await Session.bind(stack.api, projectId);
    expect(second.values).toEqual(first.values);
    expect(second.historyIndex).toBe(first.historyIndex);
  });

  it("clamps optimistic values to the slider range", async () => {
    const { projectId } = await createFixtureProject(stack.api);
    const session = await Session.bind(stack.api, projectId, 20);
    const range = session.ranges["weight"];

    session.setSlider("weight", range.max + 1000);
    expect(session.values["weight"]).toBe(range.max);
    await session.settle();
    expect(session.values["weight"]).toBeGreaterThanOrEqual(range.min);
  });

  it("rolls back and shows the verbatim server error for a rejected attribute", async () => {
    const { projectId } = await createFixtureProject(stack.api);
    // A stale client map advertising an attribute the service no longer
    // knows: the server must reject it and the UI must roll back.
    const map = await stack.api.getMap();
    const doctored = {
      ...map,
      names: [...map.names, "girth_of_nonexistence"],
      attr_min: [...map.attr_min, 0],
      attr_max: [...map.attr_max, 1],
    };
    const history = await stack.api.getHistory(projectId);
    const session = new Session(
      stack.api,
      projectId,
      doctored,
      history.entries,
      history.generations,
      20,
    );

    const weightBefore = session.values["weight"];
    session.setSlider("girth_of_nonexistence", 0.5);
    await session.settle();

    expect(session.errors["girth_of_nonexistence"]).toBe(
      "unknown attribute 'girth_of_nonexistence'",
    );
    expect(session.values["girth_of_nonexistence"]).toBe(0);
    expect(session.values["weight"]).toBe(weightBefore);
    const after = await stack.api.getHistory(projectId);
    expect(after.entries.length).toBe(history.entries.length);
  });

  it("marks the connection offline when the service dies mid-edit", async () => {
    const { projectId } = await createFixtureProject(stack.api);
    const session = await Session.bind(stack.api, projectId, 20);
    // Redirect the session's base URL at a dead port by building a twin.
    const map = await stack.api.getMap();
    const history = await stack.api.getHistory(projectId);
    const dead = new Session(
      new ApiClient("http://127.0.0.1:9"),
      projectId,
      map,
      history.entries,
      history.generations,
      20,
    );
    dead.setSlider("weight", dead.values["weight"] + 2);
    await dead.settle();
    expect(dead.connection).toBe("offline");
    expect(session.connection).toBe("ok");
  });
});

describe("generation", () => {
  it("appends a record and selects it for comparison", async () => {
    const { projectId } = await createFixtureProject(stack.api);
    const session = await Session.bind(stack.api, projectId, 20);

    const record = await session.triggerGeneration("Make the person muscular");
    expect(record.prompt).toBe("Make the person muscular");
    expect(record.history_index).toBe(session.historyIndex);
    expect(session.comparisonIndex).toBe(record.index);
    expect(session.generations.length).toBe(1);
    expect(typeof record.request_digest).toBe("string");

    const png = await stack.api.getGenerationPng(projectId, record.index);
    expect(png.slice(0, 4)).toEqual(new Uint8Array([0x89, 0x50, 0x4e, 0x47]));
  });

  it("rejects a non-canonical prompt with the verbatim 422 error", async () => {
    const { projectId } = await createFixtureProject(stack.api);
    const session = await Session.bind(stack.api, projectId, 20);
    const error = await session
      .triggerGeneration("Turn them into a robot")
      .catch((e) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect(error.status).toBe(422);
    expect(error.message).toContain("prompt must be one of");
  });
});

// Fixture loading plus a fetch stand-in that serves the recorded API
// responses, so every test runs without the backend.

import { readFileSync } from "node:fs";
import path from "node:path";
import { fileURLToPath } from "node:url";

import type { FetchLike, FetchResponse } from "../src/api.js";

const fixtureDir = path.join(path.dirname(fileURLToPath(import.meta.url)), "..", "fixtures");

export function loadFixture<T>(name: string): T {
  return JSON.parse(readFileSync(path.join(fixtureDir, `${name}.json`), "utf-8")) as T;
}

export interface FixtureMeta {
  token: string;
  checkpoint: number;
  pass_student: string;
  at_risk_student: string;
  cohort_seed: number;
  n_students: number;
}

export const META = loadFixture<FixtureMeta>("meta");

function respond(status: number, fixture: string): FetchResponse {
  const body: unknown = loadFixture(fixture);
  return { status, json: () => Promise.resolve(body) };
}

export interface FakeBackend {
  fetch: FetchLike;
  /** Request count per "METHOD path?query" key. */
  calls: Map<string, number>;
  /** Checkpoints whose models respond 404 model_not_available. */
  missingCheckpoints: Set<number>;
}

/**
 * Serves the recorded fixtures with the real service's routing rules:
 * bearer auth on /api/v1, 404 for unknown students, 400 for checkpoints
 * outside 1..4, 404 for valid checkpoints without a trained model.
 */
export function fakeBackend(): FakeBackend {
  const calls = new Map<string, number>();
  const missingCheckpoints = new Set<number>();

  const handler: FetchLike = (rawUrl, init) => {
    const url = new URL(rawUrl, "http://fixtures.test");
    const key = `GET ${url.pathname}${url.search}`;
    calls.set(key, (calls.get(key) ?? 0) + 1);

    if (url.pathname === "/healthz") {
      return Promise.resolve(respond(200, "healthz"));
    }
    if (init?.headers?.Authorization !== `Bearer ${META.token}`) {
      return Promise.resolve(respond(401, "error_unauthorized"));
    }

    const studentRoute = url.pathname.match(/^\/api\/v1\/students\/([^/]+)\/(\w+)$/);
    if (studentRoute !== null) {
      const [, studentId, resource] = studentRoute;
      if (resource !== "grades") {
        const checkpoint = Number(url.searchParams.get("checkpoint"));
        if (!(checkpoint >= 1 && checkpoint <= 4)) {
          return Promise.resolve(respond(400, "error_checkpoint_out_of_range"));
        }
        if (missingCheckpoints.has(checkpoint)) {
          return Promise.resolve(respond(404, "error_model_not_available"));
        }
      }
      if (studentId !== META.pass_student && studentId !== META.at_risk_student) {
        return Promise.resolve(respond(404, "error_unknown_student"));
      }
      if (resource === "prediction") {
        const fixture = studentId === META.at_risk_student ? "prediction_at_risk" : "prediction_pass";
        return Promise.resolve(respond(200, fixture));
      }
      if (resource === "grades" || resource === "behavior" || resource === "percentile") {
        return Promise.resolve(respond(200, resource));
      }
    }

    const courseRoute = url.pathname.match(/^\/api\/v1\/course\/(\w+)$/);
    if (courseRoute !== null) {
      const [, resource] = courseRoute;
      if (["history", "trends", "effort", "scheme"].includes(resource ?? "")) {
        return Promise.resolve(respond(200, resource as string));
      }
    }

    return Promise.resolve({
      status: 404,
      json: () => Promise.resolve({ code: "not_found", message: `no route ${url.pathname}`, detail: null }),
    });
  };

  return { fetch: handler, calls, missingCheckpoints };
}

export function totalCalls(backend: FakeBackend, pathPart: string): number {
  let total = 0;
  for (const [key, count] of backend.calls) {
    if (key.includes(pathPart)) {
      total += count;
    }
  }
  return total;
}

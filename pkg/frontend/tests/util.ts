import { readFileSync } from "node:fs";
import { resolve } from "node:path";

// vitest runs with the package directory as cwd; import.meta.url is no use
// here because jsdom rewrites it to a page URL.
export function fixtureText(name: string): string {
  return readFileSync(resolve(process.cwd(), "tests", "fixtures", name), "utf8");
}

export function fixture<T>(name: string): T {
  return JSON.parse(fixtureText(name)) as T;
}

/** Hex colors come back normalized (rgb(...)) from jsdom's style object. */
export function cssColor(value: string): string {
  const probe = document.createElement("div");
  probe.style.background = value;
  return probe.style.background;
}

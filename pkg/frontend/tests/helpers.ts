import { readFile } from "node:fs/promises";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { AssetSource } from "../src/asset.js";

export const FIXTURES = fileURLToPath(new URL("./fixtures", import.meta.url));

export function fixturePath(...parts: string[]): string {
  return path.join(FIXTURES, ...parts);
}

export async function fixtureBytes(...parts: string[]): Promise<Uint8Array> {
  return new Uint8Array(await readFile(fixturePath(...parts)));
}

export async function fixtureJson<T>(...parts: string[]): Promise<T> {
  return JSON.parse(new TextDecoder().decode(await fixtureBytes(...parts))) as T;
}

/** Bundle source over a fixture directory. */
export function dirSource(...parts: string[]): AssetSource {
  const root = fixturePath(...parts);
  return {
    async read(name: string): Promise<Uint8Array> {
      return new Uint8Array(await readFile(path.join(root, name)));
    },
  };
}

/** Same source with one file swapped out or failing, for error-path tests. */
export function patchedSource(
  base: AssetSource,
  name: string,
  replacement: Uint8Array | null,
): AssetSource {
  return {
    async read(n: string): Promise<Uint8Array> {
      if (n === name) {
        if (replacement === null) throw new Error("ENOENT: no such file");
        return replacement;
      }
      return base.read(n);
    },
  };
}

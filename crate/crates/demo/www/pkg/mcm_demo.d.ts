/* tslint:disable */
/* eslint-disable */

/**
 * Exhaustive count of the rank-condition variety over 𝔽_q.
 */
export function census(a: number, b: number, q: bigint): string;

/**
 * Exponent schedule of shape (N, c, r) with ε ≡ 1.
 */
export function schedule(n: number, c: number, r: number, heart: bigint): string;

/**
 * d = p·s + q·(s+1) and the non-representable values for s.
 */
export function semigroup(d: bigint, s: bigint, horizon: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly census: (a: number, b: number, c: bigint) => [number, number];
    readonly schedule: (a: number, b: number, c: number, d: bigint) => [number, number];
    readonly semigroup: (a: bigint, b: bigint, c: bigint) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;

/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const census: (a: number, b: number, c: bigint) => [number, number];
export const schedule: (a: number, b: number, c: number, d: bigint) => [number, number];
export const semigroup: (a: bigint, b: bigint, c: bigint) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;

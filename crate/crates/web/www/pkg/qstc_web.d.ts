/* tslint:disable */
/* eslint-disable */

/**
 * The two-tank experiment, certified once and reused by every call.
 */
export class Lab {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Table of certificate values, four decimals.
     */
    certificate(): string;
    constructor();
    region(points: number): string;
    simulate_log(rho: number, sigma: number, x1: number, x2: number): string;
    simulate_zoom(sigma: number, ell_max: number, x1: number, x2: number): string;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_lab_free: (a: number, b: number) => void;
    readonly lab_certificate: (a: number) => [number, number];
    readonly lab_new: () => [number, number, number];
    readonly lab_region: (a: number, b: number) => [number, number, number, number];
    readonly lab_simulate_log: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly lab_simulate_zoom: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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

/**
 * three.js view of the bench: vessels as translucent lathe bodies, liquid
 * proxies as instanced spheres colored per species. Ring particles arrive
 * from the server already retagged to the product species, so the brown
 * highlight needs no client-side chemistry — just the species color table.
 */

import * as THREE from "three";
import type { FrameView } from "./model.js";
import type { SceneManifest } from "./protocol.js";

const MAX_PARTICLES = 4096;

export class BenchRenderer {
  readonly scene = new THREE.Scene();
  readonly camera: THREE.PerspectiveCamera;
  private renderer: THREE.WebGLRenderer;
  private vessels = new Map<string, THREE.Mesh>();
  private spheres: THREE.InstancedMesh;
  private speciesColor = new Map<string, THREE.Color>();
  private ringGlow: THREE.Mesh | null = null;
  private tmpMat = new THREE.Matrix4();
  private tmpQuat = new THREE.Quaternion();

  constructor(canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.renderer.setSize(canvas.clientWidth, canvas.clientHeight, false);
    this.scene.background = new THREE.Color(0x10141a);

    this.camera = new THREE.PerspectiveCamera(
      40,
      canvas.clientWidth / canvas.clientHeight,
      0.01,
      10,
    );
    this.camera.position.set(0.0, 0.28, 0.5);
    this.camera.lookAt(0, 0.08, 0);

    this.scene.add(new THREE.AmbientLight(0xffffff, 0.55));
    const key = new THREE.DirectionalLight(0xffffff, 1.1);
    key.position.set(0.4, 0.8, 0.5);
    this.scene.add(key);

    const table = new THREE.Mesh(
      new THREE.CylinderGeometry(0.6, 0.6, 0.01, 48),
      new THREE.MeshStandardMaterial({ color: 0x2b2f36 }),
    );
    table.position.y = -0.005;
    this.scene.add(table);

    const geo = new THREE.SphereGeometry(1, 10, 8);
    const mat = new THREE.MeshStandardMaterial({
      transparent: true,
      opacity: 0.85,
      roughness: 0.35,
    });
    this.spheres = new THREE.InstancedMesh(geo, mat, MAX_PARTICLES);
    this.spheres.instanceMatrix.setUsage(THREE.DynamicDrawUsage);
    this.scene.add(this.spheres);
  }

  buildScene(manifest: SceneManifest): void {
    for (const mesh of this.vessels.values()) this.scene.remove(mesh);
    this.vessels.clear();
    for (const [sid, info] of Object.entries(manifest.species)) {
      this.speciesColor.set(sid, new THREE.Color(info.color));
    }
    const glass = new THREE.MeshPhysicalMaterial({
      color: 0xbfd8e8,
      transparent: true,
      opacity: 0.22,
      roughness: 0.05,
      side: THREE.DoubleSide,
    });
    for (const spec of manifest.vessels) {
      // lathe the (radius, height) profile, closing the bottom to the axis
      const pts = [new THREE.Vector2(0.0005, spec.profile[0]?.[0] ?? 0)];
      for (const [z, r] of spec.profile) pts.push(new THREE.Vector2(r, z));
      const mesh = new THREE.Mesh(new THREE.LatheGeometry(pts, 40), glass);
      this.vessels.set(spec.id, mesh);
      this.scene.add(mesh);
    }
  }

  draw(frame: FrameView, particleRadius: number): void {
    for (const v of frame.vessels) {
      const mesh = this.vessels.get(v.id);
      if (!mesh) continue;
      mesh.position.set(v.position[0], v.position[1], v.position[2]);
      // wire quaternions are (w, x, y, z); three wants (x, y, z, w)
      mesh.quaternion.set(
        v.orientation[1],
        v.orientation[2],
        v.orientation[3],
        v.orientation[0],
      );
    }

    const n = Math.min(frame.particles.length, MAX_PARTICLES);
    const fallback = new THREE.Color(0x9ad0f5);
    for (let i = 0; i < n; i++) {
      const p = frame.particles[i]!;
      this.tmpMat.compose(
        new THREE.Vector3(p.p[0], p.p[1], p.p[2]),
        this.tmpQuat.identity(),
        new THREE.Vector3(particleRadius, particleRadius, particleRadius),
      );
      this.spheres.setMatrixAt(i, this.tmpMat);
      this.spheres.setColorAt(i, this.speciesColor.get(p.species) ?? fallback);
    }
    this.spheres.count = n;
    this.spheres.instanceMatrix.needsUpdate = true;
    if (this.spheres.instanceColor) this.spheres.instanceColor.needsUpdate = true;

    this.updateRingGlow(frame);
    this.renderer.render(this.scene, this.camera);
  }

  /** Soft emissive band marking the reported ring layer on the tube wall. */
  private updateRingGlow(frame: FrameView): void {
    if (!frame.ring || frame.ring.ids.length === 0) {
      if (this.ringGlow) this.ringGlow.visible = false;
      return;
    }
    if (!this.ringGlow) {
      this.ringGlow = new THREE.Mesh(
        new THREE.TorusGeometry(0.0148, 0.0018, 10, 48),
        new THREE.MeshBasicMaterial({
          color: 0x6b3a1e,
          transparent: true,
          opacity: 0.6,
        }),
      );
      this.ringGlow.rotation.x = Math.PI / 2;
      this.scene.add(this.ringGlow);
    }
    this.ringGlow.visible = true;
    this.ringGlow.position.set(0, (frame.ring.z_lo + frame.ring.z_hi) / 2, 0);
  }
}

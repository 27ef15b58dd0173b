// Depth-3 chain: F extends E extends the diamond.
class A {
public:
  int a;
  virtual void af() { a++; }
};
class B : public virtual A {
public:
  int b;
  virtual void bf() { b++; }
};
class C : public virtual A {
public:
  int c;
  virtual void cf() { c++; }
};
class D : public B, public C {
public:
  int d;
  virtual void df() { d++; }
};
class E : public D {
public:
  int e;
  virtual void ef() { e++; }
};
class F : public E {
public:
  int f;
  virtual void ff() { f++; }
};

int main() {
  A *a = new A();
  B *b = new B();
  C *c = new C();
  D *d = new D();
  E *e = new E();
  F *f = new F();
  a->af();
  b->bf();
  c->cf();
  d->df();
  e->ef();
  f->ff();
  return 0;
}
